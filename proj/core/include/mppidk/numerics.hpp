#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mppidk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Axis-aligned box [lower, upper].
struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Eigen::Ref<const Vector>& x) const;
  Vector clamp(const Eigen::Ref<const Vector>& x) const;
  // Throws InvalidInput unless lower <= upper elementwise and both are finite.
  void validate(const char* what) const;
};

namespace numerics {

inline constexpr double kDefaultPinvTolerance = 1e-10;

bool all_finite(const Eigen::Ref<const Matrix>& m);

// Throws InvalidInput if any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const Matrix>& m, const char* what);

struct PinvResult {
  Matrix pinv;
  Eigen::Index rank = 0;       // singular values kept
  Eigen::Index full_rank = 0;  // min(rows, cols)
  bool truncated() const { return rank < full_rank; }
};

// Moore-Penrose pseudoinverse through a thin SVD. Singular values at or below
// tol * sigma_max are treated as zero.
PinvResult pinv_with_rank(const Eigen::Ref<const Matrix>& m,
                          double tol = kDefaultPinvTolerance);
Matrix pinv(const Eigen::Ref<const Matrix>& m, double tol = kDefaultPinvTolerance);

// ---------------------------------------------------------------------------
// Counter-based Gaussian noise.
//
// A key is hashed to a 64-bit stream id; the j-th uniform of the stream is a
// pure function of (stream id, j). No generator state is carried between
// calls, so evaluation order and thread count cannot change a draw.

struct NoiseStreamKey {
  std::uint64_t master_seed = 0;
  std::uint64_t step_index = 0;
  std::uint64_t rollout_index = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stream_id(const NoiseStreamKey& key);

// Uniform in the open interval (0, 1).
double counter_uniform(std::uint64_t stream, std::uint64_t counter);

// Standard normals z[0..out.size()) of a stream (Box-Muller on counter pairs).
void standard_normals(std::uint64_t stream, std::span<double> out);

// Precomputed square-root factor of a PSD covariance, reused across draws.
class GaussianSampler {
 public:
  explicit GaussianSampler(const Matrix& covariance);

  Eigen::Index dim() const { return dim_; }
  bool is_zero() const { return zero_; }
  const Matrix& covariance() const { return covariance_; }

  // One draw of N(0, covariance) into out (length dim()).
  void sample(const NoiseStreamKey& key, std::span<double> out) const;
  Vector sample(const NoiseStreamKey& key) const;

 private:
  Eigen::Index dim_ = 0;
  Matrix covariance_;
  Matrix factor_;  // covariance = factor_ * factor_^T
  Vector diag_sqrt_;
  bool diagonal_ = true;
  bool zero_ = false;
};

Vector gaussian_sample(const NoiseStreamKey& key, Eigen::Index dim,
                       const Matrix& covariance);

// ---------------------------------------------------------------------------
// Savitzky-Golay smoothing.

// Smoothing weights for the centre point of a window (length `window`).
Vector savgol_coefficients(int window, int polyorder);

// Each column of seq is one control vector; rows are input dimensions and the
// filter runs along columns (time). Boundaries are mirror-padded (reflection
// about the end sample) so the output has the same length as the input.
Matrix savgol_smooth(const Matrix& seq, int window, int polyorder);

// Largest odd window <= min(preferred, length); at least polyorder + 1 rounded
// up to odd when possible. Returns 0 when the sequence is too short to filter.
int savgol_window_for(int preferred, int length, int polyorder);

}  // namespace numerics
}  // namespace mppidk

#include "mppidk/numerics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mppidk/errors.hpp"

namespace mppidk {

bool Box::contains(const Eigen::Ref<const Vector>& x) const {
  return x.size() == lower.size() && (x.array() >= lower.array()).all() &&
         (x.array() <= upper.array()).all();
}

Vector Box::clamp(const Eigen::Ref<const Vector>& x) const {
  return x.cwiseMax(lower).cwiseMin(upper);
}

void Box::validate(const char* what) const {
  if (lower.size() != upper.size()) {
    throw InvalidInput(std::string(what) + ": bound dimensions differ");
  }
  if (!lower.allFinite() || !upper.allFinite()) {
    throw InvalidInput(std::string(what) + ": bounds must be finite");
  }
  if ((lower.array() > upper.array()).any()) {
    throw InvalidInput(std::string(what) + ": lower bound exceeds upper bound");
  }
}

}  // namespace mppidk

namespace mppidk::numerics {

bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

void require_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + ": non-finite entry");
  }
}

PinvResult pinv_with_rank(const Eigen::Ref<const Matrix>& m, double tol) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw InvalidInput("pinv: empty matrix");
  }
  if (!(tol >= 0.0)) {
    throw InvalidInput("pinv: tolerance must be nonnegative");
  }
  require_finite(m, "pinv");

  PinvResult out;
  out.full_rank = std::min(m.rows(), m.cols());

  // Wide matrices are decomposed through their transpose so the SVD always
  // runs on a tall matrix with a small square V.
  const bool wide = m.cols() > m.rows();
  Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd;
  if (wide) {
    svd.compute(m.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  } else {
    svd.compute(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  }
  const Vector& sigma = svd.singularValues();
  const double cutoff = sigma.size() > 0 ? tol * sigma(0) : 0.0;

  Vector inv_sigma = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff && sigma(i) > 0.0) {
      inv_sigma(i) = 1.0 / sigma(i);
      ++out.rank;
    }
  }
  // (U S V^T)^+ = V S^+ U^T ; for the transposed case pinv(m) = pinv(m^T)^T.
  const Matrix p = svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
  out.pinv = wide ? Matrix(p.transpose()) : p;
  return out;
}

Matrix pinv(const Eigen::Ref<const Matrix>& m, double tol) {
  return pinv_with_rank(m, tol).pinv;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_id(const NoiseStreamKey& key) {
  std::uint64_t h = splitmix64(key.master_seed);
  h = splitmix64(h ^ splitmix64(key.step_index + 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ splitmix64(key.rollout_index + 0x8CB92BA72F3D8DD7ULL));
  return h;
}

double counter_uniform(std::uint64_t stream, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(stream ^ splitmix64(counter));
  // 53 random bits, shifted by half an ulp so 0 is never returned.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

void standard_normals(std::uint64_t stream, std::span<double> out) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const double u1 = counter_uniform(stream, i);
    const double u2 = counter_uniform(stream, i + 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = kTwoPi * u2;
    out[i] = radius * std::cos(angle);
    if (i + 1 < n) {
      out[i + 1] = radius * std::sin(angle);
    }
  }
}

GaussianSampler::GaussianSampler(const Matrix& covariance)
    : dim_(covariance.rows()), covariance_(covariance) {
  if (covariance.rows() != covariance.cols()) {
    throw InvalidInput("covariance must be square");
  }
  require_finite(covariance, "covariance");
  const double asym = dim_ == 0 ? 0.0 : (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, covariance.cwiseAbs().maxCoeff())) {
    throw InvalidInput("covariance must be symmetric");
  }

  const Matrix off = covariance - Matrix(covariance.diagonal().asDiagonal());
  diagonal_ = off.isZero(0.0);
  if (diagonal_) {
    if ((covariance.diagonal().array() < 0.0).any()) {
      throw InvalidInput("covariance has a negative diagonal entry");
    }
    diag_sqrt_ = covariance.diagonal().array().sqrt();
    zero_ = diag_sqrt_.isZero(0.0);
    return;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
  const Vector& values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -1e-12 * scale) {
    throw InvalidInput("covariance is not positive semi-definite");
  }
  factor_ = eig.eigenvectors() * values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

void GaussianSampler::sample(const NoiseStreamKey& key, std::span<double> out) const {
  if (static_cast<Eigen::Index>(out.size()) != dim_) {
    throw InvalidInput("gaussian sample: output length does not match dimension");
  }
  if (zero_) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  standard_normals(stream_id(key), out);
  Eigen::Map<Vector> z(out.data(), dim_);
  if (diagonal_) {
    z.array() *= diag_sqrt_.array();
  } else {
    const Vector tmp = factor_ * z;
    z = tmp;
  }
}

Vector GaussianSampler::sample(const NoiseStreamKey& key) const {
  Vector out(dim_);
  sample(key, std::span<double>(out.data(), static_cast<std::size_t>(dim_)));
  return out;
}

Vector gaussian_sample(const NoiseStreamKey& key, Eigen::Index dim,
                       const Matrix& covariance) {
  if (covariance.rows() != dim) {
    throw InvalidInput("gaussian sample: covariance shape does not match dim");
  }
  return GaussianSampler(covariance).sample(key);
}

// ---------------------------------------------------------------------------

Vector savgol_coefficients(int window, int polyorder) {
  if (window < 1 || window % 2 == 0) {
    throw InvalidInput("savgol: window must be a positive odd count");
  }
  if (polyorder < 0 || polyorder >= window) {
    throw InvalidInput("savgol: polyorder must satisfy 0 <= polyorder < window");
  }
  const int half = window / 2;
  Matrix vander(window, polyorder + 1);
  for (int i = 0; i < window; ++i) {
    const double t = static_cast<double>(i - half);
    double p = 1.0;
    for (int k = 0; k <= polyorder; ++k) {
      vander(i, k) = p;
      p *= t;
    }
  }
  // Row 0 of pinv(V) evaluates the least-squares polynomial at t = 0.
  return pinv(vander, 1e-14).row(0).transpose();
}

Matrix savgol_smooth(const Matrix& seq, int window, int polyorder) {
  const Vector coeffs = savgol_coefficients(window, polyorder);
  const Eigen::Index length = seq.cols();
  if (window > length) {
    throw InvalidInput("savgol: window longer than sequence");
  }
  require_finite(seq, "savgol");
  const int half = window / 2;

  // Point reflection about each end sample: x[-k] = 2 x[0] - x[k]. Affine
  // sequences continue exactly through the padding.
  Matrix padded(seq.rows(), length + 2 * half);
  padded.middleCols(half, length) = seq;
  for (int k = 1; k <= half; ++k) {
    const Eigen::Index lo = std::min<Eigen::Index>(k, length - 1);
    const Eigen::Index hi = std::max<Eigen::Index>(length - 1 - k, 0);
    padded.col(half - k) = 2.0 * seq.col(0) - seq.col(lo);
    padded.col(half + length - 1 + k) = 2.0 * seq.col(length - 1) - seq.col(hi);
  }

  Matrix out = Matrix::Zero(seq.rows(), length);
  for (Eigen::Index t = 0; t < length; ++t) {
    for (int j = 0; j < window; ++j) {
      out.col(t) += coeffs(j) * padded.col(t + j);
    }
  }
  return out;
}

int savgol_window_for(int preferred, int length, int polyorder) {
  int window = std::min(preferred, length);
  if (window % 2 == 0) --window;
  if (window <= polyorder) return 0;
  return window;
}

}  // namespace mppidk::numerics

#pragma once

#include <stdexcept>
#include <string>

namespace mppidk {

// Precondition violated by the caller (bad shapes, non-finite input, bad config value).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Configuration file could not be parsed or is internally inconsistent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// DKO training produced a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A plant produced a non-finite state.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every sampled rollout was invalid, so no control update is possible.
class ControllerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mppidk

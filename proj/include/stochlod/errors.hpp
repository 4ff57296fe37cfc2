#pragma once

#include <stdexcept>
#include <string>

namespace stochlod {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridError : Error {
  using Error::Error;
};

// Circulant embedding could not be made positive semi-definite.
struct EmbeddingError : Error {
  EmbeddingError(const std::string& msg, double min_eig)
      : Error(msg), min_eigenvalue(min_eig) {}
  double min_eigenvalue;
};

struct SolveError : Error {
  SolveError(const std::string& msg, double residual = 0.0)
      : Error(msg), achieved_residual(residual) {}
  double achieved_residual;
};

struct TrainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace stochlod

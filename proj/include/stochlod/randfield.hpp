#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "stochlod/grid.hpp"

namespace stochlod {

/// Whittle-Matern covariance hyperparameters.
struct MaternParams {
  double sigma2 = 1.0;  // variance
  double nu = 1.0;      // smoothness
  double kappa = 1.0;   // correlation length

  void validate() const;
};

enum class FieldKind { gaussian, lognormal };

/// Cellwise field values at the midpoints of a fine Cartesian mesh.
struct FieldRealization {
  FineGrid grid;
  std::vector<double> values;
  FieldKind kind = FieldKind::gaussian;
};

/// Patch restriction R_T of a field realization (zero-filled outside D).
inline std::vector<double> restrict_field(const FieldRealization& field,
                                          const PatchIndex& p) {
  return restrict_cells(field.values, field.grid, p);
}

/// Matern covariance c(r); continuous at r = 0 where it equals sigma^2.
double matern_cov(const MaternParams& p, double r);

/// Modified Bessel function K_1, series for x <= 2 and a Chebyshev-fitted
/// large-argument expansion beyond; relative error below 1e-13 throughout.
double bessel_k1(double x);

/// K_nu for general nu > 0 through adaptive quadrature of the integral
/// representation; slower, used for non-unit smoothness only.
double bessel_k_nu(double nu, double x);

/// Exact sampler for the centered Gaussian field with Matern covariance on
/// the cell midpoints of a FineGrid, via FFT of the circulant embedding.
/// Construction computes the embedding eigenvalues once (padding the minimal
/// even extension up to 4x per axis if needed) and caches them; sampling is
/// one complex FFT per pair of realizations. Construction throws
/// EmbeddingError if the embedding stays indefinite at maximum padding.
/// The cached state is immutable; sample() may be called concurrently.
class CirculantSampler {
 public:
  CirculantSampler(MaternParams params, FineGrid grid);
  ~CirculantSampler();
  CirculantSampler(CirculantSampler&&) noexcept;
  CirculantSampler& operator=(CirculantSampler&&) noexcept;
  CirculantSampler(const CirculantSampler&) = delete;
  CirculantSampler& operator=(const CirculantSampler&) = delete;

  FieldRealization sample(std::uint64_t seed) const;
  // Real and imaginary parts of one FFT draw: two independent realizations.
  std::pair<FieldRealization, FieldRealization> sample_pair(std::uint64_t seed) const;

  int padding_factor() const;
  const MaternParams& params() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience wrapper (rebuilds the embedding per call).
FieldRealization sample_gaussian(const MaternParams& p, const FineGrid& grid,
                                 std::uint64_t seed);

FieldRealization to_lognormal(const FieldRealization& z);

/// max/min ratio of a lognormal realization.
double contrast(const FieldRealization& a);

/// Hierarchical field: kappa ~ Unif[kappa_low, kappa_high], then a centered
/// Matern field with that correlation length.
struct HierarchicalParams {
  double sigma2 = 1.0;
  double nu = 1.0;
  double kappa_low = 0.015625;   // 2^-6
  double kappa_high = 0.125;     // 2^-3

  void validate() const;
};

struct HierarchicalSample {
  double kappa = 0.0;
  FieldRealization field;  // lognormal
};

/// Both draws derive from the single seed: the kappa draw uses stream 0,
/// the field sample stream 1 (see derive_stream in rng.hpp).
HierarchicalSample sample_hierarchical(const HierarchicalParams& hp,
                                       const FineGrid& grid, std::uint64_t seed);

}  // namespace stochlod

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stochlod/config.hpp"
#include "stochlod/lod.hpp"
#include "stochlod/mlp.hpp"

namespace stochlod {
namespace pipeline {

struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
};

/// Realization counts per split, assigned in generation order
/// (first train, then validation, then test).
SplitSizes split_realizations(int n, const std::array<double, 3>& split);

enum class Split : char { train = 't', val = 'v', test = 's' };

struct RealizationInfo {
  int index = 0;
  double kappa = 0.0;  // realized correlation length (0 for the uniform class)
  Split split = Split::train;
  std::uint64_t seed = 0;  // pair seed of the sampling stream
};

struct DatasetManifest {
  CoefficientConfig coefficient;
  double H = 0.0, eps = 0.0, h = 0.0;
  int ell = 0;
  int input_len = 0;
  int target_len = 0;
  int pairs_per_realization = 0;
  int realizations = 0;
  SplitSizes splits;
  std::uint64_t seed = 0;
  std::vector<RealizationInfo> table;

  // Contiguous [first_pair, pair_count] blocks per split.
  std::vector<std::array<std::int64_t, 2>> blocks(Split s) const;
  std::int64_t total_pairs() const {
    return static_cast<std::int64_t>(realizations) * pairs_per_realization;
  }
};

/// Writes manifest.json and pairs.bin (little-endian doubles, each pair
/// stored as [input | target], index order (realization, element)).
DatasetManifest generate_dataset(const ExperimentConfig& config,
                                 const std::string& dir);

struct Dataset {
  DatasetManifest manifest;
  mlp::Matrix inputs;   // input_len x total_pairs
  mlp::Matrix targets;  // target_len x total_pairs

  std::vector<std::int64_t> pair_indices(Split s) const;
  mlp::Matrix split_inputs(Split s) const;
  mlp::Matrix split_targets(Split s) const;
};

Dataset load_dataset(const std::string& dir);

/// In-repo pretraining stage on piecewise-constant uniformly elliptic
/// coefficients; returns the checkpoint path (the transfer-learning warm
/// start used in place of prior-work weights).
std::string pretrain_uniform(const ExperimentConfig& config, const std::string& dir);

struct TrainResult {
  std::string checkpoint_path;
  mlp::TrainTrace trace;
  double test_loss = 0.0;
};

TrainResult train_on_dataset(const ExperimentConfig& config, const Dataset& data,
                             const std::string& out_dir);

/// NN-LOD surrogate: one batched forward pass over all patches, virtual rows
/// zeroed, then the same inflation-and-sum path as the PG-LOD assembly.
SpMat assemble_nn_surrogate(const mlp::MlpModel& model, const FieldRealization& z,
                            const CoarseGrid& coarse, int ell);

/// Spectral norm of A - B by power iteration on the normal equations
/// (Rayleigh-quotient tolerance, iteration cap).
double spectral_norm_diff(const SpMat& A, const SpMat& B, double tol = 1e-8,
                          int max_iter = 10000);
double spectral_norm(const SpMat& D, double tol = 1e-8, int max_iter = 10000);

/// L2(D) norm of a coarse interior nodal vector via the coarse Q1 mass matrix.
double coarse_l2_norm(const CoarseGrid& coarse, const Vec& interior);

/// Nodal values along the cross-sections x1 = 0.5 and x2 = 0.5, including the
/// boundary zeros.
struct CrossSection {
  std::vector<double> coord;
  std::vector<double> x1_fixed;  // u(0.5, y)
  std::vector<double> x2_fixed;  // u(x, 0.5)
};

CrossSection cross_section(const CoarseGrid& coarse, const Vec& interior);

struct EvalRow {
  int index = 0;
  std::uint64_t seed = 0;
  double kappa = 0.0;
  double contrast = 0.0;
  double l2_error = 0.0;
  double spectral_diff = 0.0;
};

struct EvalReport {
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<EvalRow> rows;
  std::vector<CrossSection> pg_sections;
  std::vector<CrossSection> nn_sections;
};

/// Fresh realizations (outside any split: a dedicated seed stream), solved
/// with PG-LOD and NN-LOD under the shared coarse load.
EvalReport evaluate(const mlp::MlpModel& model, const ExperimentConfig& config,
                    int n_fresh, const Dataset* test_data = nullptr);

void write_eval_report(const std::string& dir, const CoarseGrid& coarse,
                       const EvalReport& report);

enum class SolverKind { fem, pglod, nnlod };

struct McResult {
  int n_samples = 0;
  std::optional<Vec> fem_mean;    // fine solution restricted to coarse nodes
  std::optional<Vec> pglod_mean;
  std::optional<Vec> nnlod_mean;
};

/// Monte Carlo mean solutions with common random numbers: every solver sees
/// the identical realization stream.
McResult monte_carlo_mean(const ExperimentConfig& config, int n_samples,
                          const std::vector<SolverKind>& solvers,
                          const mlp::MlpModel* model = nullptr);

void write_mc_csv(const std::string& dir, const CoarseGrid& coarse,
                  const McResult& result);

struct ClassDraw {
  FieldRealization field;  // gaussian side (log of the coefficient)
  double kappa = 0.0;
  std::uint64_t seed = 0;
};

/// Gaussian-side realization of the config's coefficient class for one index
/// of the given stream tag (pairs of indices share one FFT draw for the
/// fixed-kappa classes).
class ClassSampler {
 public:
  ClassSampler(const ExperimentConfig& config, std::uint64_t stream_tag);
  ~ClassSampler();
  ClassSampler(ClassSampler&&) noexcept;

  ClassDraw gaussian_side(int index) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Seed-stream tags of the pipeline stages.
inline constexpr std::uint64_t kTagDataset = 0xD5;
inline constexpr std::uint64_t kTagEval = 0xE0;
inline constexpr std::uint64_t kTagMc = 0x3C;
inline constexpr std::uint64_t kTagInit = 0x11;
inline constexpr std::uint64_t kTagShuffle = 0x77;

}  // namespace pipeline
}  // namespace stochlod

#pragma once

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stochlod/grid.hpp"
#include "stochlod/mlp.hpp"

namespace stochlod {

struct CoefficientConfig {
  enum class Kind { lognormal, hierarchical, uniform };
  Kind kind = Kind::lognormal;
  double sigma2 = 0.5;
  double nu = 1.0;
  double kappa = 0.015625;  // 2^-6
  // hierarchical class
  double kappa_low = 0.015625;
  double kappa_high = 0.125;
  std::vector<double> kappa_reps = {0.125, 0.0625, 0.03125, 0.015625};
  int realizations_per_kappa = 200;
  // piecewise-constant uniformly elliptic class (pretraining)
  double uniform_low = 0.1;
  double uniform_high = 10.0;
};

struct TrainingConfig {
  int batch_size = 100;
  std::vector<mlp::LrStage> lr_stages = mlp::default_schedule();
  // Layer widths including input and output; empty derives the paper
  // architecture scaled to the grid dimensions.
  std::vector<int> architecture;

  int epochs() const;
};

/// Every scale parameter of one experiment; defaults reproduce the reference
/// setup (H = 2^-4, eps = 2^-7, h = 2^-9, ell = 2, f = 1).
struct ExperimentConfig {
  double H = 0.0625;
  double eps = 0.0078125;
  double h = 0.001953125;
  int ell = 2;
  int d = 2;
  double f = 1.0;
  CoefficientConfig coefficient;
  int realizations = 300;
  std::array<double, 3> split = {0.8, 0.1, 0.1};
  TrainingConfig training;
  std::uint64_t seed = 1;
  std::string warm_start;
  std::string out_dir = "out";
  int workers = 0;  // 0 = all hardware threads

  void validate() const;

  CoarseGrid coarse() const;
  FineGrid eps_grid() const;  // coefficient/input mesh
  FineGrid h_grid() const;    // corrector mesh
  int input_len() const;      // (2ell+1)^2 (H/eps)^2
  int target_len() const;     // (2ell+2)^2 * 2^d
  std::vector<int> architecture_dims() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& c);

}  // namespace stochlod

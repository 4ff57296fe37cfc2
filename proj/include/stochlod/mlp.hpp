#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stochlod/errors.hpp"

namespace stochlod {
namespace mlp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Fully connected ReLU network; identity activation on the last layer.
/// Samples are stored as matrix columns throughout.
struct MlpModel {
  std::vector<Matrix> W;
  std::vector<Vector> b;

  int depth() const { return static_cast<int>(W.size()); }
  int input_dim() const { return static_cast<int>(W.front().cols()); }
  int output_dim() const { return static_cast<int>(W.back().rows()); }
  std::vector<int> dims() const;  // input dim followed by per-layer out dims

  // dims = [in, out_1, ..., out_L]; weights zero until initialized.
  static MlpModel from_dims(const std::vector<int>& dims);
  // The eight-layer 1600 -> ... -> 144 architecture.
  static MlpModel paper_architecture();
  // Shrinks the paper architecture to a given input width, keeping the
  // output-sized tail layers.
  static std::vector<int> scaled_paper_dims(int input_dim, int output_dim);
};

/// He-uniform weights, zero biases, deterministic in the seed.
void init_he_uniform(MlpModel& model, std::uint64_t seed);

Matrix forward(const MlpModel& model, const Matrix& inputs);

struct Batch {
  Matrix inputs;        // in x n_b
  Matrix targets;       // out x n_b
  Vector target_norms;  // per column, must be positive

  static Batch make(Matrix inputs, Matrix targets);
};

/// Per-pair mean of 1/2 * ||prediction - target||^2 / ||target||^2.
double loss(const MlpModel& model, const Batch& batch);

struct Gradients {
  std::vector<Matrix> dW;
  std::vector<Vector> db;
};

Gradients backward(const MlpModel& model, const Batch& batch);
std::pair<double, Gradients> loss_and_gradients(const MlpModel& model,
                                                const Batch& batch);

struct LrStage {
  int first_epoch = 1;  // 1-based, inclusive
  int last_epoch = 1;
  double lr = 1e-3;
};

/// The three-stage schedule of the lognormal experiments.
std::vector<LrStage> default_schedule();
/// The two-stage schedule of the hierarchical experiments.
std::vector<LrStage> hierarchical_schedule(int epochs = 60);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Matrix> mW, vW;
  std::vector<Vector> mb, vb;
  std::vector<LrStage> schedule;

  static AdamState for_model(const MlpModel& model, std::vector<LrStage> schedule);
  double lr_for_epoch(int epoch) const;  // 1-based
};

void adam_step(MlpModel& model, AdamState& state, const Gradients& g, double lr);

struct TrainTrace {
  std::vector<double> train_loss;  // epoch mean of batch losses
  std::vector<double> val_loss;
};

/// Trains in place for the schedule's epoch span, shuffling pairs each epoch
/// with a seeded generator. Aborts with TrainError on non-finite loss.
TrainTrace train(MlpModel& model, AdamState& state, const Matrix& train_inputs,
                 const Matrix& train_targets, const Matrix& val_inputs,
                 const Matrix& val_targets, int batch_size, std::uint64_t seed);

void write_loss_csv(const std::string& path, const TrainTrace& trace);

struct Checkpoint {
  MlpModel model;
  std::optional<AdamState> state;
};

void save_checkpoint(const std::string& path, const MlpModel& model,
                     const AdamState* state = nullptr);
Checkpoint load_checkpoint(const std::string& path);
/// Loads and verifies the architecture, reporting both dimension lists on
/// mismatch.
Checkpoint load_checkpoint_expect(const std::string& path,
                                  const std::vector<int>& expected_dims);

}  // namespace mlp
}  // namespace stochlod

#include "stochlod/mlp.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "stochlod/rng.hpp"

namespace stochlod {
namespace mlp {

using json = nlohmann::json;

std::vector<int> MlpModel::dims() const {
  std::vector<int> d;
  d.push_back(input_dim());
  for (const auto& w : W) d.push_back(static_cast<int>(w.rows()));
  return d;
}

MlpModel MlpModel::from_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw Error("MlpModel needs at least one layer");
  for (int d : dims)
    if (d <= 0) throw Error("MlpModel dims must be positive");
  MlpModel m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    m.W.emplace_back(Matrix::Zero(dims[l + 1], dims[l]));
    m.b.emplace_back(Vector::Zero(dims[l + 1]));
  }
  return m;
}

MlpModel MlpModel::paper_architecture() {
  return from_dims({1600, 1600, 800, 800, 400, 400, 144, 144, 144});
}

std::vector<int> MlpModel::scaled_paper_dims(int input_dim, int output_dim) {
  return {input_dim,      input_dim,     input_dim / 2, input_dim / 2,
          input_dim / 4,  input_dim / 4, output_dim,    output_dim,
          output_dim};
}

void init_he_uniform(MlpModel& model, std::uint64_t seed) {
  for (int l = 0; l < model.depth(); ++l) {
    Matrix& W = model.W[static_cast<std::size_t>(l)];
    const double limit = std::sqrt(6.0 / static_cast<double>(W.cols()));
    CounterRng rng(derive_stream(seed, static_cast<std::uint64_t>(l)));
    for (Eigen::Index c = 0; c < W.cols(); ++c)
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        W(r, c) = limit * (2.0 * rng.uniform01() - 1.0);
    model.b[static_cast<std::size_t>(l)].setZero();
  }
}

Matrix forward(const MlpModel& model, const Matrix& inputs) {
  if (inputs.rows() != model.input_dim())
    throw Error("forward: input width " + std::to_string(inputs.rows()) +
                " does not match model input dim " +
                std::to_string(model.input_dim()));
  Matrix a = inputs;
  for (int l = 0; l < model.depth(); ++l) {
    Matrix z = model.W[static_cast<std::size_t>(l)] * a;
    z.colwise() += model.b[static_cast<std::size_t>(l)];
    a = (l + 1 < model.depth()) ? z.cwiseMax(0.0) : std::move(z);
  }
  return a;
}

Batch Batch::make(Matrix inputs, Matrix targets) {
  if (inputs.cols() != targets.cols())
    throw Error("Batch: inputs and targets disagree on the pair count");
  if (inputs.cols() == 0) throw Error("Batch: empty batch");
  Batch b;
  b.inputs = std::move(inputs);
  b.targets = std::move(targets);
  b.target_norms = b.targets.colwise().norm();
  for (Eigen::Index i = 0; i < b.target_norms.size(); ++i)
    if (!(b.target_norms[i] > 0.0))
      throw Error("Batch: zero target norm at pair " + std::to_string(i));
  return b;
}

double loss(const MlpModel& model, const Batch& batch) {
  const Matrix out = forward(model, batch.inputs);
  const Eigen::Index n = batch.inputs.cols();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double num = (out.col(i) - batch.targets.col(i)).squaredNorm();
    const double den = batch.target_norms[i] * batch.target_norms[i];
    acc += num / den;
  }
  return acc / (2.0 * static_cast<double>(n));
}

std::pair<double, Gradients> loss_and_gradients(const MlpModel& model,
                                                const Batch& batch) {
  const int L = model.depth();
  const Eigen::Index n = batch.inputs.cols();

  std::vector<Matrix> activations;  // a_0 .. a_L
  std::vector<Matrix> preacts;      // z_1 .. z_L
  activations.reserve(static_cast<std::size_t>(L) + 1);
  preacts.reserve(static_cast<std::size_t>(L));
  activations.push_back(batch.inputs);
  for (int l = 0; l < L; ++l) {
    Matrix z = model.W[static_cast<std::size_t>(l)] * activations.back();
    z.colwise() += model.b[static_cast<std::size_t>(l)];
    preacts.push_back(z);
    activations.push_back(l + 1 < L ? Matrix(z.cwiseMax(0.0)) : std::move(z));
  }

  const Matrix& out = activations.back();
  double loss_value = 0.0;
  Matrix delta(out.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = out.col(i) - batch.targets.col(i);
    const double den = batch.target_norms[i] * batch.target_norms[i];
    loss_value += diff.squaredNorm() / den;
    delta.col(i) = diff / (den * static_cast<double>(n));
  }
  loss_value /= 2.0 * static_cast<double>(n);

  Gradients g;
  g.dW.resize(static_cast<std::size_t>(L));
  g.db.resize(static_cast<std::size_t>(L));
  for (int l = L - 1; l >= 0; --l) {
    g.dW[static_cast<std::size_t>(l)] =
        delta * activations[static_cast<std::size_t>(l)].transpose();
    g.db[static_cast<std::size_t>(l)] = delta.rowwise().sum();
    if (l > 0) {
      // ReLU subgradient at exactly zero is zero.
      const Matrix mask =
          (preacts[static_cast<std::size_t>(l - 1)].array() > 0.0).cast<double>();
      delta = (model.W[static_cast<std::size_t>(l)].transpose() * delta)
                  .cwiseProduct(mask);
    }
  }
  return {loss_value, std::move(g)};
}

Gradients backward(const MlpModel& model, const Batch& batch) {
  return loss_and_gradients(model, batch).second;
}

std::vector<LrStage> default_schedule() {
  return {{1, 30, 1e-3}, {31, 40, 1e-4}, {41, 60, 9.5e-5}};
}

std::vector<LrStage> hierarchical_schedule(int epochs) {
  return {{1, 40, 1e-3}, {41, epochs, 1e-4}};
}

AdamState AdamState::for_model(const MlpModel& model, std::vector<LrStage> schedule) {
  AdamState s;
  s.schedule = std::move(schedule);
  for (int l = 0; l < model.depth(); ++l) {
    const Matrix& W = model.W[static_cast<std::size_t>(l)];
    s.mW.emplace_back(Matrix::Zero(W.rows(), W.cols()));
    s.vW.emplace_back(Matrix::Zero(W.rows(), W.cols()));
    s.mb.emplace_back(Vector::Zero(W.rows()));
    s.vb.emplace_back(Vector::Zero(W.rows()));
  }
  return s;
}

double AdamState::lr_for_epoch(int epoch) const {
  if (schedule.empty()) throw Error("AdamState: empty learning-rate schedule");
  for (const auto& st : schedule)
    if (epoch >= st.first_epoch && epoch <= st.last_epoch) return st.lr;
  return schedule.back().lr;
}

void adam_step(MlpModel& model, AdamState& state, const Gradients& g, double lr) {
  if (g.dW.size() != model.W.size() || state.mW.size() != model.W.size())
    throw Error("adam_step: shape mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    state.mW[l] = state.beta1 * state.mW[l] + (1.0 - state.beta1) * g.dW[l];
    state.vW[l] =
        state.beta2 * state.vW[l] + (1.0 - state.beta2) * g.dW[l].cwiseAbs2();
    model.W[l].array() -= lr * (state.mW[l].array() / bc1) /
                          ((state.vW[l].array() / bc2).sqrt() + state.eps);
    state.mb[l] = state.beta1 * state.mb[l] + (1.0 - state.beta1) * g.db[l];
    state.vb[l] =
        state.beta2 * state.vb[l] + (1.0 - state.beta2) * g.db[l].cwiseAbs2();
    model.b[l].array() -= lr * (state.mb[l].array() / bc1) /
                          ((state.vb[l].array() / bc2).sqrt() + state.eps);
  }
}

namespace {

double dataset_loss(const MlpModel& model, const Matrix& inputs,
                    const Matrix& targets, Eigen::Index chunk = 2048) {
  const Eigen::Index n = inputs.cols();
  double acc = 0.0;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    const Matrix out = forward(model, inputs.middleCols(start, len));
    for (Eigen::Index i = 0; i < len; ++i) {
      const double den = targets.col(start + i).squaredNorm();
      acc += (out.col(i) - targets.col(start + i)).squaredNorm() / den;
    }
  }
  return acc / (2.0 * static_cast<double>(n));
}

}  // namespace

TrainTrace train(MlpModel& model, AdamState& state, const Matrix& train_inputs,
                 const Matrix& train_targets, const Matrix& val_inputs,
                 const Matrix& val_targets, int batch_size, std::uint64_t seed) {
  if (train_inputs.cols() == 0) throw TrainError("train: empty training set");
  if (batch_size < 1) throw TrainError("train: batch_size must be >= 1");
  int epochs = 0;
  for (const auto& st : state.schedule) epochs = std::max(epochs, st.last_epoch);
  if (epochs < 1) throw TrainError("train: schedule defines no epochs");

  const Eigen::Index n = train_inputs.cols();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  TrainTrace trace;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const double lr = state.lr_for_epoch(epoch);
    std::iota(perm.begin(), perm.end(), 0);
    CounterRng rng(derive_stream(seed, static_cast<std::uint64_t>(epoch)));
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const Eigen::Index j =
          static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - start);
      Matrix bx(train_inputs.rows(), len);
      Matrix by(train_targets.rows(), len);
      for (Eigen::Index i = 0; i < len; ++i) {
        bx.col(i) = train_inputs.col(perm[static_cast<std::size_t>(start + i)]);
        by.col(i) = train_targets.col(perm[static_cast<std::size_t>(start + i)]);
      }
      const Batch batch = Batch::make(std::move(bx), std::move(by));
      auto [batch_loss, grads] = loss_and_gradients(model, batch);
      if (!std::isfinite(batch_loss))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batches) +
                         " (pairs " + std::to_string(start) + ".." +
                         std::to_string(start + len - 1) + " of the shuffled order)");
      adam_step(model, state, grads, lr);
      epoch_loss += batch_loss;
      ++batches;
    }
    trace.train_loss.push_back(epoch_loss / std::max(batches, 1));
    trace.val_loss.push_back(val_inputs.cols() > 0
                                 ? dataset_loss(model, val_inputs, val_targets)
                                 : std::numeric_limits<double>::quiet_NaN());
  }
  return trace;
}

void write_loss_csv(const std::string& path, const TrainTrace& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << "epoch,train_loss,val_loss\n";
  out.precision(17);
  for (std::size_t e = 0; e < trace.train_loss.size(); ++e) {
    out << (e + 1) << ',' << trace.train_loss[e] << ',';
    if (e < trace.val_loss.size() && std::isfinite(trace.val_loss[e]))
      out << trace.val_loss[e];
    out << '\n';
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'L', 'O', 'D', 'N', 'E', 'T', '1'};

void append_array_meta(json& arrays, const std::string& name, Eigen::Index rows,
                       Eigen::Index cols) {
  arrays.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
}

void write_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::istream& in, double* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError("checkpoint: truncated payload");
}

}  // namespace

void save_checkpoint(const std::string& path, const MlpModel& model,
                     const AdamState* state) {
  json header;
  json layers = json::array();
  json activations = json::array();
  for (int l = 0; l < model.depth(); ++l) {
    layers.push_back({model.W[static_cast<std::size_t>(l)].rows(),
                      model.W[static_cast<std::size_t>(l)].cols()});
    activations.push_back(l + 1 < model.depth() ? "relu" : "identity");
  }
  header["layers"] = layers;
  header["activations"] = activations;

  json arrays = json::array();
  for (int l = 0; l < model.depth(); ++l) {
    const auto& W = model.W[static_cast<std::size_t>(l)];
    append_array_meta(arrays, "W" + std::to_string(l + 1), W.rows(), W.cols());
    append_array_meta(arrays, "b" + std::to_string(l + 1), W.rows(), 1);
  }
  if (state) {
    header["adam"] = {{"step", state->step},
                      {"beta1", state->beta1},
                      {"beta2", state->beta2},
                      {"eps", state->eps},
                      {"schedule", json::array()}};
    for (const auto& st : state->schedule)
      header["adam"]["schedule"].push_back({st.first_epoch, st.last_epoch, st.lr});
    for (int l = 0; l < model.depth(); ++l) {
      const auto& W = model.W[static_cast<std::size_t>(l)];
      append_array_meta(arrays, "mW" + std::to_string(l + 1), W.rows(), W.cols());
      append_array_meta(arrays, "vW" + std::to_string(l + 1), W.rows(), W.cols());
      append_array_meta(arrays, "mb" + std::to_string(l + 1), W.rows(), 1);
      append_array_meta(arrays, "vb" + std::to_string(l + 1), W.rows(), 1);
    }
  } else {
    header["adam"] = nullptr;
  }
  header["arrays"] = arrays;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (int l = 0; l < model.depth(); ++l) {
    write_doubles(out, model.W[static_cast<std::size_t>(l)].data(),
                  static_cast<std::size_t>(model.W[static_cast<std::size_t>(l)].size()));
    write_doubles(out, model.b[static_cast<std::size_t>(l)].data(),
                  static_cast<std::size_t>(model.b[static_cast<std::size_t>(l)].size()));
  }
  if (state) {
    for (int l = 0; l < model.depth(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      write_doubles(out, state->mW[li].data(), static_cast<std::size_t>(state->mW[li].size()));
      write_doubles(out, state->vW[li].data(), static_cast<std::size_t>(state->vW[li].size()));
      write_doubles(out, state->mb[li].data(), static_cast<std::size_t>(state->mb[li].size()));
      write_doubles(out, state->vb[li].data(), static_cast<std::size_t>(state->vb[li].size()));
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint: truncated header");
  const json header = json::parse(header_str);

  std::vector<int> dims;
  const auto& layers = header.at("layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (l == 0) dims.push_back(layers[l][1].get<int>());
    dims.push_back(layers[l][0].get<int>());
  }
  Checkpoint ck;
  ck.model = MlpModel::from_dims(dims);
  for (int l = 0; l < ck.model.depth(); ++l) {
    auto& W = ck.model.W[static_cast<std::size_t>(l)];
    auto& b = ck.model.b[static_cast<std::size_t>(l)];
    read_doubles(in, W.data(), static_cast<std::size_t>(W.size()));
    read_doubles(in, b.data(), static_cast<std::size_t>(b.size()));
  }
  if (!header.at("adam").is_null()) {
    const auto& adam = header.at("adam");
    std::vector<LrStage> schedule;
    for (const auto& st : adam.at("schedule"))
      schedule.push_back({st[0].get<int>(), st[1].get<int>(), st[2].get<double>()});
    AdamState s = AdamState::for_model(ck.model, schedule);
    s.step = adam.at("step").get<long>();
    s.beta1 = adam.at("beta1").get<double>();
    s.beta2 = adam.at("beta2").get<double>();
    s.eps = adam.at("eps").get<double>();
    for (int l = 0; l < ck.model.depth(); ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      read_doubles(in, s.mW[li].data(), static_cast<std::size_t>(s.mW[li].size()));
      read_doubles(in, s.vW[li].data(), static_cast<std::size_t>(s.vW[li].size()));
      read_doubles(in, s.mb[li].data(), static_cast<std::size_t>(s.mb[li].size()));
      read_doubles(in, s.vb[li].data(), static_cast<std::size_t>(s.vb[li].size()));
    }
    ck.state = std::move(s);
  }
  return ck;
}

Checkpoint load_checkpoint_expect(const std::string& path,
                                  const std::vector<int>& expected_dims) {
  Checkpoint ck = load_checkpoint(path);
  const std::vector<int> got = ck.model.dims();
  if (got != expected_dims) {
    auto fmt = [](const std::vector<int>& v) {
      std::ostringstream os;
      os << '[';
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
      os << ']';
      return os.str();
    };
    throw IoError("checkpoint dimension mismatch: file has " + fmt(got) +
                  ", expected " + fmt(expected_dims));
  }
  return ck;
}

}  // namespace mlp
}  // namespace stochlod

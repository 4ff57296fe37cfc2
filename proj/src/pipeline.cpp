#include "stochlod/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "stochlod/io.hpp"
#include "stochlod/parallel.hpp"
#include "stochlod/rng.hpp"

namespace stochlod {
namespace pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

SplitSizes split_realizations(int n, const std::array<double, 3>& split) {
  SplitSizes s;
  s.train = static_cast<int>(std::llround(split[0] * n));
  s.val = static_cast<int>(std::llround(split[1] * n));
  s.train = std::min(s.train, n);
  s.val = std::min(s.val, n - s.train);
  s.test = n - s.train - s.val;
  return s;
}

namespace {

Split split_of(int i, const SplitSizes& s) {
  if (i < s.train) return Split::train;
  if (i < s.train + s.val) return Split::val;
  return Split::test;
}

FieldRealization zero_field(const FineGrid& grid) {
  FieldRealization f;
  f.grid = grid;
  f.kind = FieldKind::gaussian;
  f.values.assign(static_cast<std::size_t>(grid.num_cells()), 0.0);
  return f;
}

// Fixed-kappa Gaussian stream; consecutive indices consume the two halves of
// one FFT draw. sigma2 == 0 degenerates to the zero field.
class FixedKappaStream {
 public:
  FixedKappaStream(const MaternParams& p, const FineGrid& grid, std::uint64_t key)
      : key_(key), grid_(grid) {
    if (p.sigma2 > 0.0) sampler_.emplace(p, grid);
  }

  ClassDraw draw(int i) const {
    ClassDraw d;
    d.seed = derive_stream(key_, static_cast<std::uint64_t>(i / 2));
    if (!sampler_) {
      d.field = zero_field(grid_);
      return d;
    }
    auto pair = sampler_->sample_pair(d.seed);
    d.field = (i % 2 == 0) ? std::move(pair.first) : std::move(pair.second);
    return d;
  }

 private:
  std::uint64_t key_;
  FineGrid grid_;
  std::optional<CirculantSampler> sampler_;
};

FieldRealization log_uniform_cells(const FineGrid& grid, double lo, double hi,
                                   std::uint64_t seed) {
  FieldRealization f;
  f.grid = grid;
  f.kind = FieldKind::gaussian;
  f.values.resize(static_cast<std::size_t>(grid.num_cells()));
  CounterRng rng(seed);
  for (auto& v : f.values) v = std::log(lo + (hi - lo) * rng.uniform01());
  return f;
}

}  // namespace

struct ClassSampler::Impl {
  ExperimentConfig config;
  FineGrid eps;
  std::uint64_t key = 0;
  std::optional<FixedKappaStream> fixed;
};

ClassSampler::ClassSampler(const ExperimentConfig& config, std::uint64_t stream_tag)
    : impl_(std::make_unique<Impl>()) {
  impl_->config = config;
  impl_->eps = config.eps_grid();
  impl_->key = derive_stream(config.seed, stream_tag);
  if (config.coefficient.kind == CoefficientConfig::Kind::lognormal) {
    const MaternParams p{config.coefficient.sigma2, config.coefficient.nu,
                         config.coefficient.kappa};
    impl_->fixed.emplace(p, impl_->eps, impl_->key);
  }
}

ClassSampler::~ClassSampler() = default;
ClassSampler::ClassSampler(ClassSampler&&) noexcept = default;

ClassDraw ClassSampler::gaussian_side(int index) const {
  const auto& cfg = impl_->config;
  switch (cfg.coefficient.kind) {
    case CoefficientConfig::Kind::lognormal: {
      ClassDraw d = impl_->fixed->draw(index);
      d.kappa = cfg.coefficient.kappa;
      return d;
    }
    case CoefficientConfig::Kind::hierarchical: {
      ClassDraw d;
      d.seed = derive_stream(impl_->key, static_cast<std::uint64_t>(index));
      CounterRng kappa_rng(derive_stream(d.seed, 0));
      d.kappa = cfg.coefficient.kappa_low +
                (cfg.coefficient.kappa_high - cfg.coefficient.kappa_low) *
                    kappa_rng.uniform01();
      if (cfg.coefficient.sigma2 > 0.0) {
        const MaternParams p{cfg.coefficient.sigma2, cfg.coefficient.nu, d.kappa};
        d.field = sample_gaussian(p, impl_->eps, derive_stream(d.seed, 1));
      } else {
        d.field = zero_field(impl_->eps);
      }
      return d;
    }
    case CoefficientConfig::Kind::uniform: {
      ClassDraw d;
      d.seed = derive_stream(impl_->key, static_cast<std::uint64_t>(index));
      d.field = log_uniform_cells(impl_->eps, cfg.coefficient.uniform_low,
                                  cfg.coefficient.uniform_high, d.seed);
      return d;
    }
  }
  throw Error("unreachable coefficient class");
}

std::vector<std::array<std::int64_t, 2>> DatasetManifest::blocks(Split s) const {
  std::vector<std::array<std::int64_t, 2>> out;
  for (const auto& info : table) {
    if (info.split != s) continue;
    const std::int64_t first =
        static_cast<std::int64_t>(info.index) * pairs_per_realization;
    if (!out.empty() && out.back()[0] + out.back()[1] == first)
      out.back()[1] += pairs_per_realization;
    else
      out.push_back({first, pairs_per_realization});
  }
  return out;
}

namespace {

json manifest_to_json(const DatasetManifest& m) {
  json j;
  json coeff;
  switch (m.coefficient.kind) {
    case CoefficientConfig::Kind::lognormal:
      coeff = {{"class", "lognormal"},
               {"sigma2", m.coefficient.sigma2},
               {"nu", m.coefficient.nu},
               {"kappa", m.coefficient.kappa}};
      break;
    case CoefficientConfig::Kind::hierarchical:
      coeff = {{"class", "hierarchical"},
               {"sigma2", m.coefficient.sigma2},
               {"nu", m.coefficient.nu},
               {"kappa_reps", m.coefficient.kappa_reps},
               {"realizations_per_kappa", m.coefficient.realizations_per_kappa}};
      break;
    case CoefficientConfig::Kind::uniform:
      coeff = {{"class", "uniform"},
               {"low", m.coefficient.uniform_low},
               {"high", m.coefficient.uniform_high}};
      break;
  }
  j["coefficient"] = coeff;
  j["grid"] = {{"H", m.H}, {"eps", m.eps}, {"h", m.h}, {"ell", m.ell}};
  j["input_len"] = m.input_len;
  j["target_len"] = m.target_len;
  j["pairs_per_realization"] = m.pairs_per_realization;
  j["realizations"] = m.realizations;
  j["splits"] = {{"train", m.splits.train}, {"val", m.splits.val}, {"test", m.splits.test}};
  j["seed"] = m.seed;
  json table = json::array();
  for (const auto& e : m.table)
    table.push_back({e.index, e.kappa, std::string(1, static_cast<char>(e.split)), e.seed});
  j["realization_table"] = table;
  // Pair-block offsets per split, in pairs from the start of pairs.bin.
  json blocks;
  for (auto [name, s] : {std::pair{"train", Split::train}, {"val", Split::val},
                         {"test", Split::test}}) {
    json list = json::array();
    for (const auto& b : m.blocks(s)) list.push_back({b[0], b[1]});
    blocks[name] = list;
  }
  j["pair_blocks"] = blocks;
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  const json& coeff = j.at("coefficient");
  const std::string kind = coeff.at("class").get<std::string>();
  if (kind == "lognormal") {
    m.coefficient.kind = CoefficientConfig::Kind::lognormal;
    m.coefficient.sigma2 = coeff.at("sigma2").get<double>();
    m.coefficient.nu = coeff.at("nu").get<double>();
    m.coefficient.kappa = coeff.at("kappa").get<double>();
  } else if (kind == "hierarchical") {
    m.coefficient.kind = CoefficientConfig::Kind::hierarchical;
    m.coefficient.sigma2 = coeff.at("sigma2").get<double>();
    m.coefficient.nu = coeff.at("nu").get<double>();
    m.coefficient.kappa_reps = coeff.at("kappa_reps").get<std::vector<double>>();
    m.coefficient.realizations_per_kappa =
        coeff.at("realizations_per_kappa").get<int>();
  } else if (kind == "uniform") {
    m.coefficient.kind = CoefficientConfig::Kind::uniform;
    m.coefficient.uniform_low = coeff.at("low").get<double>();
    m.coefficient.uniform_high = coeff.at("high").get<double>();
  } else {
    throw IoError("unknown coefficient class in manifest: " + kind);
  }
  m.H = j.at("grid").at("H").get<double>();
  m.eps = j.at("grid").at("eps").get<double>();
  m.h = j.at("grid").at("h").get<double>();
  m.ell = j.at("grid").at("ell").get<int>();
  m.input_len = j.at("input_len").get<int>();
  m.target_len = j.at("target_len").get<int>();
  m.pairs_per_realization = j.at("pairs_per_realization").get<int>();
  m.realizations = j.at("realizations").get<int>();
  m.splits.train = j.at("splits").at("train").get<int>();
  m.splits.val = j.at("splits").at("val").get<int>();
  m.splits.test = j.at("splits").at("test").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("realization_table")) {
    RealizationInfo info;
    info.index = e[0].get<int>();
    info.kappa = e[1].get<double>();
    info.split = static_cast<Split>(e[2].get<std::string>()[0]);
    info.seed = e[3].get<std::uint64_t>();
    m.table.push_back(info);
  }
  return m;
}

struct RealizationPlan {
  double kappa = 0.0;
  Split split = Split::train;
  int stream_block = 0;  // index into the per-block samplers
  int index_in_block = 0;
};

}  // namespace

DatasetManifest generate_dataset(const ExperimentConfig& config,
                                 const std::string& dir) {
  config.validate();
  fs::create_directories(dir);
  io::OutputTracker tracker;
  const std::string pairs_path = (fs::path(dir) / "pairs.bin").string();
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  const std::string config_path = (fs::path(dir) / "resolved_config.json").string();
  tracker.track(pairs_path);
  tracker.track(manifest_path);
  tracker.track(config_path);

  const CoarseGrid coarse = config.coarse();
  const FineGrid eps_grid = config.eps_grid();
  const FineGrid h_grid = config.h_grid();
  const lod::Interpolator interp = lod::build_interpolator(coarse, h_grid);
  const int card = coarse.num_elements();
  const int input_len = config.input_len();
  const int target_len = config.target_len();
  const std::int64_t stride = input_len + target_len;

  // Realization plan and the per-block fixed-kappa streams. The hierarchical
  // class trains on representative kappa values, split 80:10:10 per block.
  const std::uint64_t class_key = derive_stream(config.seed, kTagDataset);
  std::vector<RealizationPlan> plan;
  std::vector<FixedKappaStream> streams;
  DatasetManifest manifest;
  manifest.coefficient = config.coefficient;

  switch (config.coefficient.kind) {
    case CoefficientConfig::Kind::lognormal: {
      const SplitSizes ss = split_realizations(config.realizations, config.split);
      streams.emplace_back(MaternParams{config.coefficient.sigma2,
                                        config.coefficient.nu,
                                        config.coefficient.kappa},
                           eps_grid, class_key);
      for (int i = 0; i < config.realizations; ++i)
        plan.push_back({config.coefficient.kappa, split_of(i, ss), 0, i});
      break;
    }
    case CoefficientConfig::Kind::hierarchical: {
      const int per = config.coefficient.realizations_per_kappa;
      const SplitSizes ss = split_realizations(per, config.split);
      int b = 0;
      for (double kappa : config.coefficient.kappa_reps) {
        streams.emplace_back(
            MaternParams{config.coefficient.sigma2, config.coefficient.nu, kappa},
            eps_grid, derive_stream(class_key, static_cast<std::uint64_t>(b)));
        for (int i = 0; i < per; ++i)
          plan.push_back({kappa, split_of(i, ss), b, i});
        ++b;
      }
      break;
    }
    case CoefficientConfig::Kind::uniform: {
      const SplitSizes ss = split_realizations(config.realizations, config.split);
      for (int i = 0; i < config.realizations; ++i)
        plan.push_back({0.0, split_of(i, ss), -1, i});
      break;
    }
  }
  const int total = static_cast<int>(plan.size());

  manifest.H = config.H;
  manifest.eps = config.eps;
  manifest.h = config.h;
  manifest.ell = config.ell;
  manifest.input_len = input_len;
  manifest.target_len = target_len;
  manifest.pairs_per_realization = card;
  manifest.realizations = total;
  manifest.seed = config.seed;
  {
    SplitSizes agg;
    for (const auto& p : plan) {
      if (p.split == Split::train) ++agg.train;
      else if (p.split == Split::val) ++agg.val;
      else ++agg.test;
    }
    manifest.splits = agg;
  }

  std::ofstream out(pairs_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + pairs_path);

  const int workers = config.workers == 0 ? default_workers() : config.workers;
  const int chunk = std::max(2 * workers, 4);
  std::vector<double> buffer;
  manifest.table.resize(static_cast<std::size_t>(total));

  for (int base = 0; base < total; base += chunk) {
    const int count = std::min(chunk, total - base);
    buffer.assign(static_cast<std::size_t>(count) * card * stride, 0.0);
    parallel_for(count, workers, [&](int k) {
      const int r = base + k;
      const RealizationPlan& rp = plan[static_cast<std::size_t>(r)];
      try {
        ClassDraw draw;
        if (rp.stream_block >= 0) {
          draw = streams[static_cast<std::size_t>(rp.stream_block)].draw(rp.index_in_block);
          draw.kappa = rp.kappa;
        } else {
          draw.seed = derive_stream(class_key, static_cast<std::uint64_t>(rp.index_in_block));
          draw.field = log_uniform_cells(eps_grid, config.coefficient.uniform_low,
                                         config.coefficient.uniform_high, draw.seed);
        }
        const FieldRealization a = to_lognormal(draw.field);
        manifest.table[static_cast<std::size_t>(r)] = {r, draw.kappa, rp.split, draw.seed};

        for (int t = 0; t < card; ++t) {
          const PatchIndex p = patch(coarse, t, config.ell);
          const std::vector<double> input = restrict_cells(draw.field.values, eps_grid, p);
          const lod::CorrectorSet cs = lod::solve_correctors(p, interp, a, h_grid);
          const lod::LocalSurrogate s = lod::local_surrogate(p, cs, a, h_grid);
          const std::vector<double> target = s.vec();
          double* dst = buffer.data() +
                        (static_cast<std::int64_t>(k) * card + t) * stride;
          std::copy(input.begin(), input.end(), dst);
          std::copy(target.begin(), target.end(), dst + input_len);
        }
      } catch (const std::exception& e) {
        throw Error("realization " + std::to_string(r) + ": " + e.what());
      }
    });
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size() * sizeof(double)));
    if (!out) throw IoError("write failed for " + pairs_path);
  }
  out.close();

  std::ofstream mf(manifest_path, std::ios::trunc);
  if (!mf) throw IoError("cannot open " + manifest_path);
  mf << manifest_to_json(manifest).dump(2) << '\n';
  mf.close();
  save_config(config_path, config);
  tracker.release();
  return manifest;
}

Dataset load_dataset(const std::string& dir) {
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError("cannot open " + manifest_path);
  json j;
  mf >> j;
  Dataset ds;
  ds.manifest = manifest_from_json(j);

  const std::vector<double> raw =
      io::read_doubles_le((fs::path(dir) / "pairs.bin").string());
  const std::int64_t stride = ds.manifest.input_len + ds.manifest.target_len;
  const std::int64_t pairs = ds.manifest.total_pairs();
  if (static_cast<std::int64_t>(raw.size()) != pairs * stride)
    throw IoError("pairs.bin does not match the manifest");
  ds.inputs.resize(ds.manifest.input_len, pairs);
  ds.targets.resize(ds.manifest.target_len, pairs);
  for (std::int64_t p = 0; p < pairs; ++p) {
    const double* src = raw.data() + p * stride;
    std::copy(src, src + ds.manifest.input_len, ds.inputs.col(p).data());
    std::copy(src + ds.manifest.input_len, src + stride, ds.targets.col(p).data());
  }
  return ds;
}

std::vector<std::int64_t> Dataset::pair_indices(Split s) const {
  std::vector<std::int64_t> idx;
  for (const auto& b : manifest.blocks(s))
    for (std::int64_t p = b[0]; p < b[0] + b[1]; ++p) idx.push_back(p);
  return idx;
}

namespace {
mlp::Matrix gather_cols(const mlp::Matrix& m, const std::vector<std::int64_t>& idx) {
  mlp::Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}
}  // namespace

mlp::Matrix Dataset::split_inputs(Split s) const {
  return gather_cols(inputs, pair_indices(s));
}
mlp::Matrix Dataset::split_targets(Split s) const {
  return gather_cols(targets, pair_indices(s));
}

TrainResult train_on_dataset(const ExperimentConfig& config, const Dataset& data,
                             const std::string& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  const std::vector<int> dims = config.architecture_dims();
  if (data.manifest.input_len != dims.front() ||
      data.manifest.target_len != dims.back())
    throw ConfigError("dataset pair shape (" + std::to_string(data.manifest.input_len) +
                      " -> " + std::to_string(data.manifest.target_len) +
                      ") does not match the architecture");

  mlp::MlpModel model;
  if (!config.warm_start.empty()) {
    model = mlp::load_checkpoint_expect(config.warm_start, dims).model;
  } else {
    model = mlp::MlpModel::from_dims(dims);
    mlp::init_he_uniform(model, derive_stream(config.seed, kTagInit));
  }
  mlp::AdamState state = mlp::AdamState::for_model(model, config.training.lr_stages);

  const mlp::Matrix xtr = data.split_inputs(Split::train);
  const mlp::Matrix ytr = data.split_targets(Split::train);
  const mlp::Matrix xval = data.split_inputs(Split::val);
  const mlp::Matrix yval = data.split_targets(Split::val);

  TrainResult result;
  result.trace = mlp::train(model, state, xtr, ytr, xval, yval,
                            config.training.batch_size,
                            derive_stream(config.seed, kTagShuffle));

  const mlp::Matrix xte = data.split_inputs(Split::test);
  result.test_loss = std::numeric_limits<double>::quiet_NaN();
  if (xte.cols() > 0) {
    const mlp::Batch test = mlp::Batch::make(xte, data.split_targets(Split::test));
    result.test_loss = mlp::loss(model, test);
  }

  result.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
  io::OutputTracker tracker;
  tracker.track(result.checkpoint_path);
  tracker.track((fs::path(out_dir) / "loss.csv").string());
  tracker.track((fs::path(out_dir) / "resolved_config.json").string());
  mlp::save_checkpoint(result.checkpoint_path, model);
  mlp::write_loss_csv((fs::path(out_dir) / "loss.csv").string(), result.trace);
  save_config((fs::path(out_dir) / "resolved_config.json").string(), config);
  tracker.release();
  return result;
}

std::string pretrain_uniform(const ExperimentConfig& config, const std::string& dir) {
  ExperimentConfig pc = config;
  pc.coefficient.kind = CoefficientConfig::Kind::uniform;
  pc.warm_start.clear();  // pretraining always starts fresh
  fs::create_directories(dir);
  const std::string data_dir = (fs::path(dir) / "data").string();
  generate_dataset(pc, data_dir);
  const Dataset data = load_dataset(data_dir);
  const TrainResult result = train_on_dataset(pc, data, dir);
  return result.checkpoint_path;
}

SpMat assemble_nn_surrogate(const mlp::MlpModel& model, const FieldRealization& z,
                            const CoarseGrid& coarse, int ell) {
  const FineGrid& eps_grid = z.grid;
  const int card = coarse.num_elements();
  const int slots = (2 * ell + 2) * (2 * ell + 2);
  if (model.output_dim() != slots * 4)
    throw Error("model output dim " + std::to_string(model.output_dim()) +
                " does not match " + std::to_string(slots * 4));

  std::vector<PatchIndex> patches;
  patches.reserve(static_cast<std::size_t>(card));
  mlp::Matrix inputs(model.input_dim(), card);
  for (int t = 0; t < card; ++t) {
    patches.push_back(patch(coarse, t, ell));
    const std::vector<double> v = restrict_cells(z.values, eps_grid, patches.back());
    if (static_cast<Eigen::Index>(v.size()) != inputs.rows())
      throw Error("patch input length " + std::to_string(v.size()) +
                  " does not match model input dim " +
                  std::to_string(model.input_dim()));
    inputs.col(t) = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  const mlp::Matrix out = forward(model, inputs);
  std::vector<Eigen::MatrixXd> mats(static_cast<std::size_t>(card));
  for (int t = 0; t < card; ++t) {
    Eigen::MatrixXd m =
        Eigen::Map<const Eigen::MatrixXd>(out.col(t).data(), slots, 4);
    // Virtual rows are zeroed here, never trusted from the network.
    for (int s = 0; s < slots; ++s)
      if (!patches[static_cast<std::size_t>(t)].node_closure[static_cast<std::size_t>(s)])
        m.row(s).setZero();
    mats[static_cast<std::size_t>(t)] = std::move(m);
  }
  return lod::assemble_surrogate(coarse, ell, mats);
}

double spectral_norm(const SpMat& D, double tol, int max_iter) {
  const Eigen::Index n = D.cols();
  if (n == 0) return 0.0;
  CounterRng rng(0x5eec7a11u);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.gaussian();
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vec w = D * v;
    Vec z = D.transpose() * w;
    const double nz = z.norm();
    if (nz == 0.0) return 0.0;
    const double next = std::sqrt(w.squaredNorm());  // Rayleigh quotient, unit v
    z /= nz;
    v = z;
    if (it > 0 && std::abs(next - sigma) <= tol * std::max(next, 1e-30))
      return next;
    sigma = next;
  }
  return sigma;
}

double spectral_norm_diff(const SpMat& A, const SpMat& B, double tol, int max_iter) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw Error("spectral_norm_diff: shape mismatch");
  return spectral_norm(SpMat(A - B), tol, max_iter);
}

double coarse_l2_norm(const CoarseGrid& coarse, const Vec& interior) {
  FineGrid self;
  self.parent = coarse;
  self.refinement = 1;
  const SpMat M = fem::assemble_mass(self);
  return std::sqrt(std::max(0.0, interior.dot(M * interior)));
}

CrossSection cross_section(const CoarseGrid& coarse, const Vec& interior) {
  CrossSection cs;
  const int n = coarse.n;
  const int mid = n / 2;
  auto value_at = [&](int nx, int ny) {
    const int idx = coarse.interior_node_index(nx, ny);
    return idx < 0 ? 0.0 : interior[idx];
  };
  for (int i = 0; i <= n; ++i) {
    cs.coord.push_back(i * coarse.H);
    cs.x1_fixed.push_back(value_at(mid, i));
    cs.x2_fixed.push_back(value_at(i, mid));
  }
  return cs;
}

EvalReport evaluate(const mlp::MlpModel& model, const ExperimentConfig& config,
                    int n_fresh, const Dataset* test_data) {
  config.validate();
  if (n_fresh < 0) throw ConfigError("evaluate: n_fresh must be >= 0");
  const CoarseGrid coarse = config.coarse();
  const FineGrid h_grid = config.h_grid();
  const lod::Interpolator interp = lod::build_interpolator(coarse, h_grid);
  const Vec load = lod::coarse_load(coarse, config.f);
  const ClassSampler fresh(config, kTagEval);
  const int workers = config.workers == 0 ? default_workers() : config.workers;

  EvalReport report;
  report.rows.resize(static_cast<std::size_t>(n_fresh));
  report.pg_sections.resize(static_cast<std::size_t>(n_fresh));
  report.nn_sections.resize(static_cast<std::size_t>(n_fresh));

  const int outer = std::min(workers, std::max(n_fresh, 1));
  const int inner = std::max(1, workers / outer);
  parallel_for(n_fresh, outer, [&](int i) {
    const ClassDraw draw = fresh.gaussian_side(i);
    const FieldRealization a = to_lognormal(draw.field);

    const lod::PgLodSystem pg =
        lod::pg_lod_system(coarse, h_grid, interp, a, config.ell, inner);
    const Vec u_pg = lod::solve_pglod(pg.S, load);
    const SpMat s_nn = assemble_nn_surrogate(model, draw.field, coarse, config.ell);
    const Vec u_nn = lod::solve_pglod(s_nn, load);

    EvalRow row;
    row.index = i;
    row.seed = draw.seed;
    row.kappa = draw.kappa;
    row.contrast = contrast(a);
    row.l2_error = coarse_l2_norm(coarse, u_pg - u_nn);
    row.spectral_diff = spectral_norm_diff(pg.S, s_nn);
    report.rows[static_cast<std::size_t>(i)] = row;
    report.pg_sections[static_cast<std::size_t>(i)] = cross_section(coarse, u_pg);
    report.nn_sections[static_cast<std::size_t>(i)] = cross_section(coarse, u_nn);
  });

  if (test_data) {
    const mlp::Matrix xte = test_data->split_inputs(Split::test);
    if (xte.cols() > 0) {
      const mlp::Batch test =
          mlp::Batch::make(xte, test_data->split_targets(Split::test));
      report.test_loss = mlp::loss(model, test);
    }
  }
  return report;
}

void write_eval_report(const std::string& dir, const CoarseGrid& coarse,
                       const EvalReport& report) {
  fs::create_directories(dir);
  io::OutputTracker tracker;
  for (const char* name : {"eval_report.csv", "eval_report.json", "cross_sections.csv"})
    tracker.track((fs::path(dir) / name).string());
  {
    std::ofstream out((fs::path(dir) / "eval_report.csv").string(), std::ios::trunc);
    if (!out) throw IoError("cannot write eval_report.csv");
    out.precision(17);
    out << "realization,seed,kappa,contrast,l2_error,spectral_diff\n";
    for (const auto& r : report.rows)
      out << r.index << ',' << r.seed << ',' << r.kappa << ',' << r.contrast << ','
          << r.l2_error << ',' << r.spectral_diff << '\n';
  }
  {
    json j;
    j["test_loss"] = std::isfinite(report.test_loss)
                         ? json(report.test_loss)
                         : json(nullptr);
    j["rows"] = json::array();
    for (const auto& r : report.rows)
      j["rows"].push_back({{"realization", r.index},
                           {"seed", r.seed},
                           {"kappa", r.kappa},
                           {"contrast", r.contrast},
                           {"l2_error", r.l2_error},
                           {"spectral_diff", r.spectral_diff}});
    std::ofstream out((fs::path(dir) / "eval_report.json").string(), std::ios::trunc);
    out << j.dump(2) << '\n';
  }
  {
    std::ofstream out((fs::path(dir) / "cross_sections.csv").string(), std::ios::trunc);
    out.precision(17);
    out << "realization,axis,coordinate,pglod,nnlod\n";
    for (std::size_t i = 0; i < report.pg_sections.size(); ++i) {
      const CrossSection& pg = report.pg_sections[i];
      const CrossSection& nn = report.nn_sections[i];
      for (std::size_t k = 0; k < pg.coord.size(); ++k) {
        out << i << ",x1=0.5," << pg.coord[k] << ',' << pg.x1_fixed[k] << ','
            << nn.x1_fixed[k] << '\n';
        out << i << ",x2=0.5," << pg.coord[k] << ',' << pg.x2_fixed[k] << ','
            << nn.x2_fixed[k] << '\n';
      }
    }
  }
  tracker.release();
  (void)coarse;
}

McResult monte_carlo_mean(const ExperimentConfig& config, int n_samples,
                          const std::vector<SolverKind>& solvers,
                          const mlp::MlpModel* model) {
  config.validate();
  if (n_samples < 1) throw ConfigError("monte_carlo_mean: n_samples must be >= 1");
  const bool want_fem = std::count(solvers.begin(), solvers.end(), SolverKind::fem) > 0;
  const bool want_pg = std::count(solvers.begin(), solvers.end(), SolverKind::pglod) > 0;
  const bool want_nn = std::count(solvers.begin(), solvers.end(), SolverKind::nnlod) > 0;
  if (want_nn && !model)
    throw ConfigError("monte_carlo_mean: nnlod solver needs a model");

  const CoarseGrid coarse = config.coarse();
  const FineGrid h_grid = config.h_grid();
  const lod::Interpolator interp =
      (want_pg || want_nn) ? lod::build_interpolator(coarse, h_grid)
                           : lod::Interpolator{};
  const Vec load = lod::coarse_load(coarse, config.f);
  const int dim = coarse.num_interior_nodes();
  const int r = h_grid.refinement;
  const ClassSampler mc(config, kTagMc);
  const int workers = config.workers == 0 ? default_workers() : config.workers;

  std::vector<Vec> fem_sols, pg_sols, nn_sols;
  if (want_fem) fem_sols.assign(static_cast<std::size_t>(n_samples), Vec());
  if (want_pg) pg_sols.assign(static_cast<std::size_t>(n_samples), Vec());
  if (want_nn) nn_sols.assign(static_cast<std::size_t>(n_samples), Vec());

  parallel_for(n_samples, workers, [&](int i) {
    const ClassDraw draw = mc.gaussian_side(i);
    const FieldRealization a = to_lognormal(draw.field);
    if (want_fem) {
      const SpMat K = fem::assemble_stiffness(h_grid, a);
      const Vec b = fem::assemble_load(h_grid, config.f);
      const fem::FemSolution sol = fem::solve_dirichlet(h_grid, K, b, 1e-12);
      Vec at_coarse(dim);
      for (int zy = 1; zy <= coarse.n - 1; ++zy)
        for (int zx = 1; zx <= coarse.n - 1; ++zx)
          at_coarse[coarse.interior_node_index(zx, zy)] =
              sol.values[h_grid.node_index(zx * r, zy * r)];
      fem_sols[static_cast<std::size_t>(i)] = std::move(at_coarse);
    }
    if (want_pg) {
      const lod::PgLodSystem pg =
          lod::pg_lod_system(coarse, h_grid, interp, a, config.ell, 1);
      pg_sols[static_cast<std::size_t>(i)] = lod::solve_pglod(pg.S, load);
    }
    if (want_nn) {
      const SpMat s_nn = assemble_nn_surrogate(*model, draw.field, coarse, config.ell);
      nn_sols[static_cast<std::size_t>(i)] = lod::solve_pglod(s_nn, load);
    }
  });

  auto mean_of = [&](const std::vector<Vec>& sols) {
    Vec acc = Vec::Zero(dim);
    for (const Vec& s : sols) acc += s;
    return Vec(acc / static_cast<double>(n_samples));
  };
  McResult result;
  result.n_samples = n_samples;
  if (want_fem) result.fem_mean = mean_of(fem_sols);
  if (want_pg) result.pglod_mean = mean_of(pg_sols);
  if (want_nn) result.nnlod_mean = mean_of(nn_sols);
  return result;
}

void write_mc_csv(const std::string& dir, const CoarseGrid& coarse,
                  const McResult& result) {
  fs::create_directories(dir);
  io::OutputTracker tracker;
  auto write_solver = [&](const char* name, const Vec& mean) {
    tracker.track((fs::path(dir) / ("mean_cross_" + std::string(name) + ".csv")).string());
    const CrossSection cs = cross_section(coarse, mean);
    std::ofstream out((fs::path(dir) / ("mean_cross_" + std::string(name) + ".csv")).string(),
                      std::ios::trunc);
    if (!out) throw IoError("cannot write mean cross-section CSV");
    out.precision(17);
    out << "coordinate,x1_fixed,x2_fixed\n";
    for (std::size_t k = 0; k < cs.coord.size(); ++k)
      out << cs.coord[k] << ',' << cs.x1_fixed[k] << ',' << cs.x2_fixed[k] << '\n';
  };
  if (result.fem_mean) write_solver("fem", *result.fem_mean);
  if (result.pglod_mean) write_solver("pglod", *result.pglod_mean);
  if (result.nnlod_mean) write_solver("nnlod", *result.nnlod_mean);

  tracker.track((fs::path(dir) / "mean_cross_sections.csv").string());
  std::ofstream out((fs::path(dir) / "mean_cross_sections.csv").string(), std::ios::trunc);
  out.precision(17);
  out << "axis,coordinate,fem,pglod,nnlod\n";
  std::optional<CrossSection> fem_cs, pg_cs, nn_cs;
  if (result.fem_mean) fem_cs = cross_section(coarse, *result.fem_mean);
  if (result.pglod_mean) pg_cs = cross_section(coarse, *result.pglod_mean);
  if (result.nnlod_mean) nn_cs = cross_section(coarse, *result.nnlod_mean);
  const int n = coarse.n;
  for (int axis = 0; axis < 2; ++axis)
    for (int i = 0; i <= n; ++i) {
      out << (axis == 0 ? "x1=0.5" : "x2=0.5") << ',' << i * coarse.H;
      auto emit = [&](const std::optional<CrossSection>& cs) {
        out << ',';
        if (cs)
          out << (axis == 0 ? cs->x1_fixed[static_cast<std::size_t>(i)]
                            : cs->x2_fixed[static_cast<std::size_t>(i)]);
      };
      emit(fem_cs);
      emit(pg_cs);
      emit(nn_cs);
      out << '\n';
    }
  tracker.release();
}

}  // namespace pipeline
}  // namespace stochlod

#include "stochlod/config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace stochlod {

using json = nlohmann::json;

namespace {

bool is_dyadic(double x) {
  if (!(x > 0.0) || x > 1.0) return false;
  const double inv = 1.0 / x;
  const double r = std::round(inv);
  const auto n = static_cast<std::int64_t>(r);
  return std::abs(inv - r) < 1e-12 && n >= 1 && (n & (n - 1)) == 0;
}

int dyadic_ratio(double coarse, double fine) {
  return static_cast<int>(std::round(coarse / fine));
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key))
      throw ConfigError("invalid config key: " + prefix + key);
  }
}

CoefficientConfig coefficient_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"class", "sigma2", "nu", "kappa", "kappa_low", "kappa_high",
                       "kappa_reps", "realizations_per_kappa", "low", "high"},
                      "coefficient.");
  CoefficientConfig c;
  const std::string kind = j.value("class", "lognormal");
  if (kind == "lognormal")
    c.kind = CoefficientConfig::Kind::lognormal;
  else if (kind == "hierarchical")
    c.kind = CoefficientConfig::Kind::hierarchical;
  else if (kind == "uniform")
    c.kind = CoefficientConfig::Kind::uniform;
  else
    throw ConfigError("invalid config value: coefficient.class = " + kind);
  c.sigma2 = j.value("sigma2", c.sigma2);
  c.nu = j.value("nu", c.nu);
  c.kappa = j.value("kappa", c.kappa);
  c.kappa_low = j.value("kappa_low", c.kappa_low);
  c.kappa_high = j.value("kappa_high", c.kappa_high);
  if (j.contains("kappa_reps"))
    c.kappa_reps = j.at("kappa_reps").get<std::vector<double>>();
  c.realizations_per_kappa = j.value("realizations_per_kappa", c.realizations_per_kappa);
  c.uniform_low = j.value("low", c.uniform_low);
  c.uniform_high = j.value("high", c.uniform_high);
  return c;
}

json coefficient_to_json(const CoefficientConfig& c) {
  json j;
  switch (c.kind) {
    case CoefficientConfig::Kind::lognormal:
      j["class"] = "lognormal";
      j["sigma2"] = c.sigma2;
      j["nu"] = c.nu;
      j["kappa"] = c.kappa;
      break;
    case CoefficientConfig::Kind::hierarchical:
      j["class"] = "hierarchical";
      j["sigma2"] = c.sigma2;
      j["nu"] = c.nu;
      j["kappa_low"] = c.kappa_low;
      j["kappa_high"] = c.kappa_high;
      j["kappa_reps"] = c.kappa_reps;
      j["realizations_per_kappa"] = c.realizations_per_kappa;
      break;
    case CoefficientConfig::Kind::uniform:
      j["class"] = "uniform";
      j["low"] = c.uniform_low;
      j["high"] = c.uniform_high;
      break;
  }
  return j;
}

TrainingConfig training_from_json(const json& j) {
  reject_unknown_keys(j, {"batch_size", "lr_stages", "architecture"}, "training.");
  TrainingConfig t;
  t.batch_size = j.value("batch_size", t.batch_size);
  if (j.contains("lr_stages")) {
    t.lr_stages.clear();
    for (const auto& st : j.at("lr_stages")) {
      if (!st.is_array() || st.size() != 3)
        throw ConfigError("invalid config value: training.lr_stages entries must be "
                          "[first_epoch, last_epoch, lr]");
      t.lr_stages.push_back({st[0].get<int>(), st[1].get<int>(), st[2].get<double>()});
    }
  }
  if (j.contains("architecture"))
    t.architecture = j.at("architecture").get<std::vector<int>>();
  return t;
}

json training_to_json(const TrainingConfig& t) {
  json j;
  j["batch_size"] = t.batch_size;
  j["lr_stages"] = json::array();
  for (const auto& st : t.lr_stages)
    j["lr_stages"].push_back({st.first_epoch, st.last_epoch, st.lr});
  if (!t.architecture.empty()) j["architecture"] = t.architecture;
  return j;
}

}  // namespace

int TrainingConfig::epochs() const {
  int e = 0;
  for (const auto& st : lr_stages) e = std::max(e, st.last_epoch);
  return e;
}

void ExperimentConfig::validate() const {
  if (d != 2) throw ConfigError("invalid config value: d must be 2");
  if (!is_dyadic(H) || !is_dyadic(eps) || !is_dyadic(h))
    throw ConfigError("invalid config value: H, eps, h must be dyadic");
  if (!(H > eps) || !(eps >= h))
    throw ConfigError("invalid config value: H > eps >= h required");
  if (ell < 1) throw ConfigError("invalid config value: ell must be >= 1");
  if (realizations < 1)
    throw ConfigError("invalid config value: realizations must be >= 1");
  if (training.epochs() < 1)
    throw ConfigError("invalid config value: the schedule must define >= 1 epoch");
  if (training.batch_size < 1)
    throw ConfigError("invalid config value: batch_size must be >= 1");
  const double s = split[0] + split[1] + split[2];
  if (std::abs(s - 1.0) > 1e-9 || split[0] <= 0.0 || split[1] < 0.0 || split[2] < 0.0)
    throw ConfigError("invalid config value: split fractions must be positive and sum to 1");
}

CoarseGrid ExperimentConfig::coarse() const { return build_coarse_grid(H, d); }

FineGrid ExperimentConfig::eps_grid() const {
  return refine(coarse(), dyadic_ratio(H, eps));
}

FineGrid ExperimentConfig::h_grid() const {
  return refine(coarse(), dyadic_ratio(H, h));
}

int ExperimentConfig::input_len() const {
  const int r = dyadic_ratio(H, eps);
  const int w = (2 * ell + 1) * r;
  return w * w;
}

int ExperimentConfig::target_len() const {
  const int s = 2 * ell + 2;
  return s * s * 4;
}

std::vector<int> ExperimentConfig::architecture_dims() const {
  if (!training.architecture.empty()) {
    if (training.architecture.front() != input_len() ||
        training.architecture.back() != target_len())
      throw ConfigError(
          "invalid config value: training.architecture endpoints must match the "
          "patch input length " + std::to_string(input_len()) +
          " and target length " + std::to_string(target_len()));
    return training.architecture;
  }
  return mlp::MlpModel::scaled_paper_dims(input_len(), target_len());
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown_keys(
      j,
      {"H", "eps", "h", "ell", "d", "f", "coefficient", "realizations", "split",
       "training", "seed", "warm_start", "out_dir", "workers"},
      "");
  ExperimentConfig c;
  c.H = j.value("H", c.H);
  c.eps = j.value("eps", c.eps);
  c.h = j.value("h", c.h);
  c.ell = j.value("ell", c.ell);
  c.d = j.value("d", c.d);
  c.f = j.value("f", c.f);
  if (j.contains("coefficient")) c.coefficient = coefficient_from_json(j.at("coefficient"));
  c.realizations = j.value("realizations", c.realizations);
  if (j.contains("split")) {
    const auto v = j.at("split").get<std::vector<double>>();
    if (v.size() != 3)
      throw ConfigError("invalid config value: split must have three entries");
    std::copy(v.begin(), v.end(), c.split.begin());
  }
  if (j.contains("training")) c.training = training_from_json(j.at("training"));
  // The hierarchical experiment family trains with the two-stage schedule
  // unless the config pins its own stages.
  if (c.coefficient.kind == CoefficientConfig::Kind::hierarchical &&
      !(j.contains("training") && j.at("training").contains("lr_stages")))
    c.training.lr_stages = mlp::hierarchical_schedule(60);
  c.seed = j.value("seed", c.seed);
  c.warm_start = j.value("warm_start", c.warm_start);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["H"] = c.H;
  j["eps"] = c.eps;
  j["h"] = c.h;
  j["ell"] = c.ell;
  j["d"] = c.d;
  j["f"] = c.f;
  j["coefficient"] = coefficient_to_json(c.coefficient);
  j["realizations"] = c.realizations;
  j["split"] = c.split;
  j["training"] = training_to_json(c.training);
  j["seed"] = c.seed;
  if (!c.warm_start.empty()) j["warm_start"] = c.warm_start;
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace stochlod

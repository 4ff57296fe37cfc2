#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "stochlod/config.hpp"
#include "stochlod/io.hpp"
#include "stochlod/lod.hpp"
#include "stochlod/pipeline.hpp"

namespace fs = std::filesystem;
using namespace stochlod;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = -1;
  bool deterministic = false;
};

ExperimentConfig resolve_config(const GlobalOpts& g) {
  ExperimentConfig c = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  if (g.seed_set) c.seed = g.seed;
  if (g.workers >= 0) c.workers = g.workers;
  if (g.deterministic) c.workers = 1;
  if (!g.out_dir.empty()) {
    c.out_dir = g.out_dir;
  } else if (const char* env = std::getenv("STOCHLOD_OUT"); env && c.out_dir == "out") {
    c.out_dir = env;
  }
  c.validate();
  return c;
}

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
  cmd->add_option("--config", g.config_path, "JSON config file");
  cmd->add_option("--out", g.out_dir, "output directory (overrides config/out_dir)");
  cmd->add_option("--seed", g.seed, "master seed override")
      ->each([&](const std::string&) { g.seed_set = true; });
  cmd->add_option("--workers", g.workers, "worker threads (0 = all)");
  cmd->add_flag("--deterministic", g.deterministic,
                "single-threaded bitwise-reproducible mode");
}

int run_sample(const ExperimentConfig& c, int index) {
  fs::create_directories(c.out_dir);
  const pipeline::ClassSampler sampler(c, pipeline::kTagEval);
  const pipeline::ClassDraw draw = sampler.gaussian_side(index);
  const FieldRealization a = to_lognormal(draw.field);
  const std::string stem_z = (fs::path(c.out_dir) / ("z_" + std::to_string(index))).string();
  const std::string stem_a = (fs::path(c.out_dir) / ("a_" + std::to_string(index))).string();
  io::write_field(stem_z, draw.field, draw.seed);
  io::write_field(stem_a, a, draw.seed);
  save_config((fs::path(c.out_dir) / "resolved_config.json").string(), c);
  std::cout << "realization " << index << ": kappa = " << draw.kappa
            << ", contrast = " << contrast(a) << "\n"
            << "wrote " << stem_z << ".{bin,json} and " << stem_a << ".{bin,json}\n";
  return 0;
}

int run_convergence(const ExperimentConfig& c, const std::vector<double>& h_list) {
  fs::create_directories(c.out_dir);
  const std::string path = (fs::path(c.out_dir) / "convergence.csv").string();
  std::ofstream out(path, std::ios::trunc);
  out.precision(17);
  out << "H,ell,rel_l2_error\n";
  for (double H : h_list) {
    const CoarseGrid coarse = build_coarse_grid(H, 2);
    const int ell = std::max(1, static_cast<int>(std::lround(std::log2(1.0 / H))));
    ExperimentConfig cc = c;
    cc.H = H;
    cc.ell = ell;
    const FineGrid h_grid = cc.h_grid();
    const pipeline::ClassSampler sampler(cc, pipeline::kTagMc);
    const FieldRealization a = to_lognormal(sampler.gaussian_side(0).field);

    const lod::Interpolator interp = lod::build_interpolator(coarse, h_grid);
    const lod::PgLodSystem sys =
        lod::pg_lod_system(coarse, h_grid, interp, a, ell, cc.workers);
    const Vec u_h = lod::solve_pglod(sys.S, lod::coarse_load(coarse, cc.f));

    const SpMat K = fem::assemble_stiffness(h_grid, a);
    const Vec b = fem::assemble_load(h_grid, cc.f);
    const fem::FemSolution ref = fem::solve_dirichlet(h_grid, K, b, 1e-12);
    Vec ref_coarse(coarse.num_interior_nodes());
    const int r = h_grid.refinement;
    for (int zy = 1; zy <= coarse.n - 1; ++zy)
      for (int zx = 1; zx <= coarse.n - 1; ++zx)
        ref_coarse[coarse.interior_node_index(zx, zy)] =
            ref.values[h_grid.node_index(zx * r, zy * r)];

    const double err = pipeline::coarse_l2_norm(coarse, u_h - ref_coarse) /
                       pipeline::coarse_l2_norm(coarse, ref_coarse);
    out << H << ',' << ell << ',' << err << '\n';
    std::cout << "H = " << H << " (ell = " << ell << "): rel L2 error vs FEM = "
              << err << "\n";
  }
  std::cout << "wrote " << path << "\n";
  return 0;
}

int run_decay(const ExperimentConfig& c, int element, bool constant_coeff) {
  fs::create_directories(c.out_dir);
  const CoarseGrid coarse = c.coarse();
  const FineGrid h_grid = c.h_grid();
  const lod::Interpolator interp = lod::build_interpolator(coarse, h_grid);
  FieldRealization a;
  if (constant_coeff) {
    a.grid = c.eps_grid();
    a.kind = FieldKind::lognormal;
    a.values.assign(static_cast<std::size_t>(a.grid.num_cells()), 1.0);
  } else {
    const pipeline::ClassSampler sampler(c, pipeline::kTagMc);
    a = to_lognormal(sampler.gaussian_side(0).field);
  }
  const int T = element >= 0 ? element
                             : coarse.element_index(coarse.n / 2, coarse.n / 2);
  const std::vector<double> table =
      lod::corrector_decay(coarse, h_grid, interp, a, T);
  const std::string path = (fs::path(c.out_dir) / "decay.csv").string();
  std::ofstream out(path, std::ios::trunc);
  out.precision(17);
  out << "ell,energy_diff\n";
  for (std::size_t k = 0; k < table.size(); ++k)
    out << (k + 1) << ',' << table[k] << '\n';
  std::cout << "wrote " << path << " (" << table.size() << " rows)\n";
  return 0;
}

std::vector<pipeline::SolverKind> parse_solvers(const std::string& csv) {
  std::vector<pipeline::SolverKind> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string tok = csv.substr(start, comma == std::string::npos
                                                  ? std::string::npos
                                                  : comma - start);
    if (tok == "fem") out.push_back(pipeline::SolverKind::fem);
    else if (tok == "pglod") out.push_back(pipeline::SolverKind::pglod);
    else if (tok == "nnlod") out.push_back(pipeline::SolverKind::nnlod);
    else if (!tok.empty()) throw ConfigError("unknown solver: " + tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError("no solvers requested");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-scale surrogates for random multiscale diffusion: "
               "PG-LOD compression, NN-LOD training, and Monte Carlo studies"};
  app.require_subcommand(1);

  GlobalOpts g_sample, g_gen, g_pre, g_train, g_eval, g_mc, g_conv, g_decay;
  int sample_index = 0;
  std::string train_data, eval_model, eval_data, mc_model, mc_solvers = "fem,pglod";
  int eval_fresh = 1, mc_samples = 100, decay_element = -1;
  bool decay_constant = false;
  std::vector<double> conv_h_list = {0.25, 0.125, 0.0625};

  CLI::App* sample = app.add_subcommand("sample", "draw and store one realization");
  add_global_opts(sample, g_sample);
  sample->add_option("--index", sample_index, "realization index in the stream");

  CLI::App* gen = app.add_subcommand("gen-dataset", "generate an input/target dataset");
  add_global_opts(gen, g_gen);

  CLI::App* pre = app.add_subcommand("pretrain",
                                     "pretrain on uniformly elliptic coefficients");
  add_global_opts(pre, g_pre);

  CLI::App* train = app.add_subcommand("train", "train or retrain on a dataset");
  add_global_opts(train, g_train);
  train->add_option("--data", train_data, "dataset directory")->required();
  std::string train_warm;
  train->add_option("--warm-start", train_warm, "checkpoint to start from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a model on fresh realizations");
  add_global_opts(eval, g_eval);
  eval->add_option("--model", eval_model, "model checkpoint")->required();
  eval->add_option("--fresh-seeds", eval_fresh, "number of fresh realizations");
  eval->add_option("--data", eval_data, "dataset directory for the test loss");

  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo mean-solution study");
  add_global_opts(mc, g_mc);
  mc->add_option("--samples", mc_samples, "number of samples");
  mc->add_option("--solvers", mc_solvers, "comma list of fem,pglod,nnlod");
  mc->add_option("--model", mc_model, "model checkpoint for nnlod");

  CLI::App* conv = app.add_subcommand("convergence", "PG-LOD vs FEM convergence study");
  add_global_opts(conv, g_conv);
  conv->add_option("--H-list", conv_h_list, "coarse mesh sizes");

  CLI::App* decay = app.add_subcommand("decay", "corrector truncation decay table");
  add_global_opts(decay, g_decay);
  decay->add_option("--element", decay_element, "center element index (default: middle)");
  decay->add_flag("--constant", decay_constant, "use the unit coefficient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sample->parsed()) return run_sample(resolve_config(g_sample), sample_index);
    if (gen->parsed()) {
      const ExperimentConfig c = resolve_config(g_gen);
      const pipeline::DatasetManifest m = pipeline::generate_dataset(c, c.out_dir);
      std::cout << "dataset: " << m.realizations << " realizations ("
                << m.splits.train << "/" << m.splits.val << "/" << m.splits.test
                << " split), " << m.total_pairs() << " pairs in " << c.out_dir << "\n";
      return 0;
    }
    if (pre->parsed()) {
      const ExperimentConfig c = resolve_config(g_pre);
      const std::string ckpt = pipeline::pretrain_uniform(c, c.out_dir);
      std::cout << "pretrained checkpoint: " << ckpt << "\n";
      return 0;
    }
    if (train->parsed()) {
      ExperimentConfig c = resolve_config(g_train);
      if (!train_warm.empty()) c.warm_start = train_warm;
      const pipeline::Dataset data = pipeline::load_dataset(train_data);
      const pipeline::TrainResult r = pipeline::train_on_dataset(c, data, c.out_dir);
      std::cout << "final train loss " << r.trace.train_loss.back()
                << ", val loss " << r.trace.val_loss.back()
                << ", test loss " << r.test_loss << "\n"
                << "checkpoint: " << r.checkpoint_path << "\n";
      return 0;
    }
    if (eval->parsed()) {
      const ExperimentConfig c = resolve_config(g_eval);
      const mlp::Checkpoint ck = mlp::load_checkpoint(eval_model);
      std::optional<pipeline::Dataset> data;
      if (!eval_data.empty()) data = pipeline::load_dataset(eval_data);
      const pipeline::EvalReport report = pipeline::evaluate(
          ck.model, c, eval_fresh, data ? &*data : nullptr);
      pipeline::write_eval_report(c.out_dir, c.coarse(), report);
      save_config((fs::path(c.out_dir) / "resolved_config.json").string(), c);
      for (const auto& r : report.rows)
        std::cout << "realization " << r.index << ": contrast " << r.contrast
                  << ", L2 error " << r.l2_error << ", spectral diff "
                  << r.spectral_diff << "\n";
      return 0;
    }
    if (mc->parsed()) {
      const ExperimentConfig c = resolve_config(g_mc);
      const auto solvers = parse_solvers(mc_solvers);
      std::optional<mlp::Checkpoint> ck;
      if (!mc_model.empty()) ck = mlp::load_checkpoint(mc_model);
      const pipeline::McResult result = pipeline::monte_carlo_mean(
          c, mc_samples, solvers, ck ? &ck->model : nullptr);
      pipeline::write_mc_csv(c.out_dir, c.coarse(), result);
      save_config((fs::path(c.out_dir) / "resolved_config.json").string(), c);
      std::cout << "wrote mean cross-sections for " << mc_samples
                << " samples to " << c.out_dir << "\n";
      return 0;
    }
    if (conv->parsed()) return run_convergence(resolve_config(g_conv), conv_h_list);
    if (decay->parsed())
      return run_decay(resolve_config(g_decay), decay_element, decay_constant);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

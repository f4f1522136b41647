#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "dunal/config.hpp"
#include "dunal/gradcheck.hpp"
#include "dunal/harness.hpp"
#include "dunal/persist.hpp"

namespace fs = std::filesystem;
using namespace dunal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory (default: $DUN_OUT_ROOT/<name> or results/<name>)");
  cmd->add_option("--seed", o.seed, "First repeat seed (overrides experiment.seed_base)");
  cmd->add_option("--repeats", o.repeats, "Number of repeats (overrides experiment.n_repeats)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--force", o.force, "Write into a non-empty output directory");
  cmd->add_flag("-q,--quiet", o.quiet, "No progress output");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed_base = *o.seed;
  if (o.repeats) cfg.n_repeats = *o.repeats;
  cfg.validate();
  return cfg;
}

fs::path output_dir(const CommonOptions& o, const ExperimentConfig& cfg, std::string_view suffix = {}) {
  if (!o.out.empty()) return o.out;
  const char* root = std::getenv("DUN_OUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("results");
  return base / (cfg.name + std::string(suffix));
}

ProgressFn progress(const CommonOptions& o) {
  if (o.quiet) return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

void print_summary(const std::vector<AggregateRow>& rows, std::ostream& os) {
  if (rows.empty()) return;
  const AggregateRow& last = rows.back();
  os << std::setprecision(6) << "final step " << last.step << " (" << last.acquired << " points, " << last.n_ok << "/"
     << last.n_runs << " runs ok): test NLL " << last.test_nll_mean << " +/- " << last.test_nll_std << ", RMSE "
     << last.test_rmse_mean << " +/- " << last.test_rmse_std << ", overfitting bias " << last.overfitting_bias_mean
     << '\n';
}

int cmd_run(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = output_dir(o, cfg);
  prepare_output_dir(dir, o.force);
  const Dataset ds = load_dataset(cfg.dataset);
  const ExperimentResult res = run_experiment(cfg, ds, progress(o));
  persist(res, cfg, dir, true);
  print_summary(res.aggregate, std::cout);
  std::cout << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonOptions& o, const std::string& axis_name) {
  const ExperimentConfig cfg = resolve(o);
  const SweepAxis axis = parse_sweep_axis(axis_name);
  const fs::path dir = output_dir(o, cfg, "_" + axis_name);
  prepare_output_dir(dir, o.force);
  const Dataset ds = load_dataset(cfg.dataset);
  for (const auto& [label, variant] : sweep_configs(cfg, axis)) {
    if (!o.quiet) std::cerr << "== " << axis_name << " = " << label << '\n';
    const ExperimentResult res = run_experiment(variant, ds, progress(o));
    const fs::path sub = dir / (axis_name + "=" + label);
    persist(res, variant, sub, true);
    std::cout << axis_name << "=" << label << ": ";
    print_summary(res.aggregate, std::cout);
  }
  std::cout << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_posterior(const CommonOptions& o, const std::vector<Index>& sizes) {
  ExperimentConfig cfg = resolve(o);
  cfg.method = Method::dun;
  const fs::path dir = output_dir(o, cfg, "_posterior");
  prepare_output_dir(dir, o.force);
  const Dataset ds = load_dataset(cfg.dataset);
  std::vector<Index> chosen = sizes;
  if (chosen.empty()) {
    const Index train = split_standardize(ds, cfg.dataset.ratios, 0).train.size();
    chosen = default_posterior_sizes(cfg, train);
  }
  const auto records = depth_posterior_study(cfg, ds, chosen, progress(o));
  write_depth_posteriors_csv(dir / "depth_posteriors.csv", std::span<const PosteriorRecord>(records));
  write_config_json(dir / "config.json", cfg);

  std::map<Index, std::pair<double, int>> by_size;
  for (const auto& r : records) {
    by_size[r.size].first += r.mean_depth;
    by_size[r.size].second += 1;
  }
  for (const auto& [n, acc] : by_size)
    std::cout << "n=" << n << ": mean posterior depth " << acc.first / acc.second << '\n';
  std::cout << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_bias(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = output_dir(o, cfg, "_bias");
  prepare_output_dir(dir, o.force);
  const Dataset ds = load_dataset(cfg.dataset);
  for (Method m : {Method::dun, Method::mcdo}) {
    ExperimentConfig variant = cfg;
    variant.method = m;
    variant.name = cfg.name + "_" + std::string(to_string(m));
    const ExperimentResult res = run_experiment(variant, ds, progress(o));
    persist(res, variant, dir / std::string(to_string(m)), true);
    std::cout << to_string(m) << ": ";
    print_summary(res.aggregate, std::cout);
  }
  std::cout << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_gen_toy(const std::string& name, std::optional<Index> n, std::optional<double> noise, std::uint64_t seed,
                const std::string& out) {
  const Dataset ds = gen_toy(name, n, noise, seed);
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw IoError("cannot write '" + out + "'");
  }
  std::ostream& os = out.empty() ? std::cout : file;
  os << std::setprecision(17);
  for (Index j = 0; j < ds.X.cols(); ++j) os << (ds.X.cols() == 1 ? "x" : "x" + std::to_string(j)) << ',';
  os << "y\n";
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.X.cols(); ++j) os << ds.X(i, j) << ',';
    os << ds.y(i, 0) << '\n';
  }
  if (!out.empty()) std::cerr << "wrote " << ds.size() << " rows to " << out << '\n';
  return kExitOk;
}

int cmd_check_gradients(int trials, std::uint64_t seed, bool verbose) {
  const GradientSuiteReport report = run_gradient_suite(trials, seed);
  if (verbose)
    for (const auto& c : report.cases)
      std::cout << std::setw(40) << std::left << c.label << " max rel err " << std::scientific << std::setprecision(3)
                << c.report.max_relative_error << std::defaultfloat << '\n';
  std::cout << "checked " << report.cases.size() << " cases, max relative error " << std::scientific
            << std::setprecision(3) << report.max_relative_error << (report.passed ? " (ok)" : " (FAILED, limit 1e-4)")
            << '\n';
  return report.passed ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth uncertainty networks for active learning"};
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, post_opts, bias_opts;
  auto* run = app.add_subcommand("run", "Run an active-learning experiment and write CSV results");
  add_common(run, run_opts);

  auto* sw = app.add_subcommand("sweep", "Repeat an experiment along one axis with paired seeds");
  add_common(sw, sweep_opts);
  std::string axis;
  sw->add_option("--axis", axis, "temperature | prior | method | depth")
      ->required()
      ->check(CLI::IsMember({"temperature", "prior", "method", "depth"}));

  auto* post = app.add_subcommand("posterior", "DUN depth posteriors at the smallest and largest set sizes");
  add_common(post, post_opts);
  std::vector<Index> sizes;
  post->add_option("--sizes", sizes, "Training-set sizes (default: initial and final acquired counts)");

  auto* bias = app.add_subcommand("bias", "Overfitting-bias curves for DUN and MC dropout");
  add_common(bias, bias_opts);

  auto* gen = app.add_subcommand("gen-toy", "Export a toy regression dataset as CSV");
  std::string toy_name, toy_out;
  std::optional<Index> toy_n;
  std::optional<double> toy_noise;
  std::uint64_t toy_seed = 0;
  gen->add_option("--name", toy_name, "simple1d | izmailov | foong | matern | wiggle")->required();
  gen->add_option("--n", toy_n, "Number of points (default: the generator's size)")->check(CLI::PositiveNumber);
  gen->add_option("--noise", toy_noise, "Observation noise std");
  gen->add_option("--seed", toy_seed, "Random seed");
  gen->add_option("--out", toy_out, "Output CSV (default: stdout)");

  auto* grad = app.add_subcommand("check-gradients", "Finite-difference check of every analytic gradient");
  int trials = 24;
  std::uint64_t grad_seed = 0;
  bool verbose = false;
  grad->add_option("--trials", trials, "Random network configurations")->check(CLI::PositiveNumber);
  grad->add_option("--seed", grad_seed, "Random seed");
  grad->add_flag("-v,--verbose", verbose, "Print every case");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*sw) return cmd_sweep(sweep_opts, axis);
    if (*post) return cmd_posterior(post_opts, sizes);
    if (*bias) return cmd_bias(bias_opts);
    if (*gen) return cmd_gen_toy(toy_name, toy_n, toy_noise, toy_seed, toy_out);
    if (*grad) return cmd_check_gradients(trials, grad_seed, verbose);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

#include "dunal/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <variant>

namespace dunal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Independent stream per (base, tags...) so that adding a draw in one place
// never shifts the randomness used elsewhere.
Rng derive_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32)};
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

enum Stream : std::uint64_t { kSplit = 1, kInit, kModel, kTrain, kEval, kAcquire, kSubset };

using Fit = std::variant<DunFit, NetFit, MfviFit>;

struct Trained {
  Method method;
  Fit fit;
  int test_samples = 10;

  GaussianMixturePredictive predict(const Matrix& X, Rng& rng) const {
    switch (method) {
      case Method::dun: {
        const auto& f = std::get<DunFit>(fit);
        return dun_predict(f.net, f.q, X);
      }
      case Method::mcdo: return mcdo_predict(std::get<NetFit>(fit).net, X, test_samples, rng);
      case Method::mfvi: return mfvi_predict(std::get<MfviFit>(fit).net, X, test_samples, rng);
      case Method::sgd: return sgd_predict(std::get<NetFit>(fit).net, X);
    }
    throw ConfigError("unknown method");
  }

  Vector bald(const Matrix& X, Rng& rng) const {
    if (method == Method::dun) {
      const auto& f = std::get<DunFit>(fit);
      return dun_bald(f.net, f.q, X);
    }
    if (method == Method::sgd) return gaussian_mixture_bald(predict(X, rng));
    return mc_bald(predict(X, rng));
  }
};

NetworkConfig base_network(const ExperimentConfig& cfg, Index input_dim, std::uint64_t init_seed) {
  NetworkConfig nc;
  nc.input_dim = input_dim;
  nc.hidden_dim = cfg.hidden_dim;
  nc.output_dim = 1;
  nc.seed = init_seed;
  return nc;
}

BaselineTrainConfig baseline_train(const ExperimentConfig& cfg) {
  BaselineTrainConfig t;
  t.iterations = cfg.iterations;
  t.optimizer = cfg.optimizer;
  t.validation_selection = cfg.validation_selection;
  t.checkpoint_every = cfg.checkpoint_every;
  return t;
}

Trained fit_model(const ExperimentConfig& cfg, Method method, const Samples& train, const Samples& valid,
                  std::uint64_t init_seed, Rng& rng) {
  NetworkConfig nc = base_network(cfg, train.X.cols(), init_seed);
  switch (method) {
    case Method::dun: {
      nc.depth = cfg.dun.depth;
      nc.use_batchnorm = cfg.dun.batchnorm;
      DunTrainConfig t;
      t.iterations = cfg.iterations;
      t.optimizer = cfg.optimizer;
      t.prior = cfg.dun.make_prior();
      t.validation_selection = cfg.validation_selection;
      t.checkpoint_every = cfg.checkpoint_every;
      return {method, train_dun(train, valid, nc, t, rng), 1};
    }
    case Method::mcdo:
      return {method, mcdo_train(train, valid, nc, cfg.mcdo, baseline_train(cfg), rng), cfg.mcdo.n_test_samples};
    case Method::mfvi:
      return {method, mfvi_train(train, valid, nc, cfg.mfvi, baseline_train(cfg), rng), cfg.mfvi.n_test_samples};
    case Method::sgd:
      return {method, sgd_train(train, valid, nc, cfg.sgd_depth, baseline_train(cfg), rng), 1};
  }
  throw ConfigError("unknown method");
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

std::pair<double, double> moments(const std::vector<double>& v) {
  if (v.empty()) return {kNaN, kNaN};
  const double m = mean_of(v);
  return {m, population_std(v, m)};
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::dun: return "dun";
    case Method::mcdo: return "mcdo";
    case Method::mfvi: return "mfvi";
    case Method::sgd: return "sgd";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::dun, Method::mcdo, Method::mfvi, Method::sgd})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

DepthDistribution DunSettings::make_prior() const {
  if (prior == "uniform") return DepthDistribution::uniform(depth);
  if (prior == "decaying") return DepthDistribution::decaying(depth, prior_rho);
  throw ConfigError("unknown depth prior '" + prior + "'");
}

void ExperimentConfig::validate() const {
  if (init_train_size < 1) throw ConfigError("init_train_size must be >= 1");
  if (n_queries < 0) throw ConfigError("n_queries must be >= 0");
  if (query_size < 1) throw ConfigError("query_size must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (n_repeats < 1) throw ConfigError("n_repeats must be >= 1");
  if (dun.depth < 0 || sgd_depth < 0) throw ConfigError("depths must be >= 0");
  if (dataset.kind != "toy" && dataset.kind != "file") throw ConfigError("dataset.kind must be toy or file");
  (void)dun.make_prior();
  mcdo.validate();
  mfvi.validate();
  AcquisitionConfig a = acquisition;
  a.batch_size = query_size;
  a.validate();
}

int ExperimentConfig::method_depth() const {
  switch (method) {
    case Method::dun: return dun.depth;
    case Method::mcdo: return mcdo.depth;
    case Method::mfvi: return mfvi.depth;
    case Method::sgd: return sgd_depth;
  }
  return 0;
}

void ExperimentConfig::set_method_depth(int depth) {
  switch (method) {
    case Method::dun: dun.depth = depth; break;
    case Method::mcdo: mcdo.depth = depth; break;
    case Method::mfvi: mfvi.depth = depth; break;
    case Method::sgd: sgd_depth = depth; break;
  }
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.kind == "toy") return gen_toy(spec.name, spec.size, spec.noise_std, spec.seed);
  if (spec.kind == "file") {
    Dataset ds = load_delimited(spec.path, spec.delimited);
    if (!spec.name.empty()) ds.name = spec.name;
    return ds;
  }
  throw ConfigError("dataset.kind must be toy or file");
}

RunResult run_single(const ExperimentConfig& cfg, const Dataset& ds, std::uint64_t seed, int run_index,
                     const ProgressFn& progress) {
  cfg.validate();
  const auto run_start = std::chrono::steady_clock::now();
  RunResult out;
  out.run = run_index;
  out.seed = seed;

  const DataSplit split = split_standardize(ds, cfg.dataset.ratios, derive_rng(seed, {kSplit})());
  if (split.test.empty()) throw ConfigError("run: the test split is empty");
  for (const auto& w : split.standardizer.warnings) out.log.push_back("warning: " + w);
  const Index pool_size = split.train.size();
  if (cfg.init_train_size > pool_size)
    throw ConfigError("init_train_size " + std::to_string(cfg.init_train_size) + " exceeds the training split (" +
                      std::to_string(pool_size) + ")");

  Rng init_rng = derive_rng(seed, {kInit});
  ActivePool pool = init_pool(pool_size, cfg.init_train_size, init_rng);

  for (int step = 0; step <= cfg.n_queries; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.run = run_index;
    rec.seed = seed;
    rec.step = step;
    rec.acquired = static_cast<Index>(pool.acquired.size());
    const Samples acquired = pool.acquired_samples(split.train);

    std::optional<Trained> model;
    rec.attempts = 0;
    for (int attempt = 0; attempt < 2 && !model; ++attempt) {
      ++rec.attempts;
      Rng train_rng = derive_rng(seed, {kTrain, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(attempt)});
      const std::uint64_t init_seed =
          derive_rng(seed, {kModel, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(attempt)})();
      try {
        model = fit_model(cfg, cfg.method, acquired, split.valid, init_seed, train_rng);
      } catch (const NumericError& e) {
        out.log.push_back("run " + std::to_string(run_index) + " step " + std::to_string(step) + " attempt " +
                          std::to_string(attempt) + ": " + e.what());
      }
    }

    Rng eval_rng = derive_rng(seed, {kEval, static_cast<std::uint64_t>(step)});
    if (model) {
      const auto pred = model->predict(split.test.X, eval_rng);
      rec.test_nll = mixture_nll(pred, split.test.y);
      rec.test_rmse = mixture_rmse(pred, split.test.y);
      const PredictiveFn predict = [&](const Matrix& X) { return model->predict(X, eval_rng); };
      const RiskReport risk = overfitting_bias(predict, pool.record, acquired, split.test, pool_size, cfg.risk_loss);
      rec.r_test = risk.r_test;
      rec.r_tilde_train = risk.r_tilde_train;
      rec.r_lure_train = risk.r_lure_train;
      rec.overfitting_bias = risk.overfitting_bias;
      if (cfg.method == Method::dun) {
        const auto& q = std::get<DunFit>(model->fit).q;
        const Vector p = q.probs();
        rec.depth_probs.assign(p.data(), p.data() + p.size());
        rec.mean_depth = q.mean_depth();
      } else {
        rec.mean_depth = kNaN;
      }
    } else {
      rec.ok = false;
      rec.test_nll = rec.test_rmse = rec.r_test = rec.r_tilde_train = rec.r_lure_train = rec.overfitting_bias =
          rec.mean_depth = kNaN;
      out.log.push_back("run " + std::to_string(run_index) + " step " + std::to_string(step) +
                        ": training failed twice; step recorded as missing, acquiring at random");
    }

    const bool last = step == cfg.n_queries;
    const bool exhausted = !last && pool.remaining.empty();
    if (exhausted) {
      out.truncated = true;
      out.log.push_back("run " + std::to_string(run_index) + ": pool exhausted after step " + std::to_string(step));
    }
    if (!last && !exhausted) {
      AcquisitionConfig acq = cfg.acquisition;
      acq.batch_size = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.query_size),
                                                              pool.remaining.size()));
      if (acq.batch_size < cfg.query_size) {
        out.truncated = true;
        out.log.push_back("run " + std::to_string(run_index) + ": final query truncated to " +
                          std::to_string(acq.batch_size) + " points");
      }
      Vector scores = Vector::Zero(static_cast<Index>(pool.remaining.size()));
      if (!model) {
        acq.strategy = AcquisitionStrategy::random;
      } else if (acq.strategy != AcquisitionStrategy::random) {
        scores = model->bald(pool.remaining_samples(split.train).X, eval_rng);
      }
      Rng acq_rng = derive_rng(seed, {kAcquire, static_cast<std::uint64_t>(step)});
      pool.acquire(stochastic_batch_acquire(scores, pool.remaining, acq, acq_rng, step + 1));
    }

    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) {
      std::ostringstream msg;
      msg << "run " << run_index << " (seed " << seed << ") step " << step << ": n=" << rec.acquired
          << " nll=" << rec.test_nll << " rmse=" << rec.test_rmse;
      if (cfg.method == Method::dun && rec.ok) msg << " mean_depth=" << rec.mean_depth;
      progress(msg.str());
    }
    out.steps.push_back(std::move(rec));
    if (exhausted) break;
  }
  out.record = pool.record;
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds, const ProgressFn& progress) {
  cfg.validate();
  ExperimentResult out;
  for (int r = 0; r < cfg.n_repeats; ++r) {
    out.runs.push_back(run_single(cfg, ds, cfg.seed_base + static_cast<std::uint64_t>(r), r, progress));
    if (progress)
      for (const auto& line : out.runs.back().log) progress(line);
  }
  out.aggregate = aggregate(out.runs);
  return out;
}

std::vector<AggregateRow> aggregate(std::span<const StepRecord> steps) {
  // Fold in (step, seed, run) order regardless of input order.
  std::vector<const StepRecord*> sorted;
  for (const auto& s : steps) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](const StepRecord* a, const StepRecord* b) {
    return std::tie(a->step, a->seed, a->run) < std::tie(b->step, b->seed, b->run);
  });

  std::vector<AggregateRow> rows;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    AggregateRow row;
    row.step = sorted[i]->step;
    row.acquired = sorted[i]->acquired;
    std::vector<double> nll, rmse, rt, rl, bias, depth;
    for (; j < sorted.size() && sorted[j]->step == row.step; ++j) {
      const StepRecord& s = *sorted[j];
      ++row.n_runs;
      if (!s.ok) continue;
      ++row.n_ok;
      nll.push_back(s.test_nll);
      rmse.push_back(s.test_rmse);
      rt.push_back(s.r_test);
      rl.push_back(s.r_lure_train);
      bias.push_back(s.overfitting_bias);
      if (!std::isnan(s.mean_depth)) depth.push_back(s.mean_depth);
    }
    std::tie(row.test_nll_mean, row.test_nll_std) = moments(nll);
    std::tie(row.test_rmse_mean, row.test_rmse_std) = moments(rmse);
    std::tie(row.r_test_mean, row.r_test_std) = moments(rt);
    std::tie(row.r_lure_train_mean, row.r_lure_train_std) = moments(rl);
    std::tie(row.overfitting_bias_mean, row.overfitting_bias_std) = moments(bias);
    std::tie(row.mean_depth_mean, row.mean_depth_std) = moments(depth);
    rows.push_back(row);
    i = j;
  }
  return rows;
}

std::vector<AggregateRow> aggregate(std::span<const RunResult> runs) {
  std::vector<StepRecord> all;
  for (const auto& r : runs) all.insert(all.end(), r.steps.begin(), r.steps.end());
  return aggregate(std::span<const StepRecord>(all));
}

SweepAxis parse_sweep_axis(std::string_view name) {
  for (auto a : {SweepAxis::temperature, SweepAxis::prior, SweepAxis::method, SweepAxis::depth})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::temperature: return "temperature";
    case SweepAxis::prior: return "prior";
    case SweepAxis::method: return "method";
    case SweepAxis::depth: return "depth";
  }
  return "unknown";
}

std::vector<std::pair<std::string, ExperimentConfig>> sweep_configs(const ExperimentConfig& cfg, SweepAxis axis) {
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  auto add = [&](std::string label, auto&& mutate) {
    ExperimentConfig c = cfg;
    mutate(c);
    c.name = cfg.name + "_" + std::string(to_string(axis)) + "=" + label;
    c.validate();
    out.emplace_back(std::move(label), std::move(c));
  };
  switch (axis) {
    case SweepAxis::temperature:
      for (double t : cfg.sweep.temperature) {
        std::ostringstream label;
        label << t;
        add(label.str(), [&](ExperimentConfig& c) {
          c.acquisition.strategy = AcquisitionStrategy::bald_stochastic;
          c.acquisition.temperature = t;
        });
      }
      break;
    case SweepAxis::prior:
      for (const auto& p : cfg.sweep.prior) add(p, [&](ExperimentConfig& c) { c.dun.prior = p; });
      break;
    case SweepAxis::method:
      for (const auto& m : cfg.sweep.method) add(m, [&](ExperimentConfig& c) { c.method = parse_method(m); });
      break;
    case SweepAxis::depth:
      for (int d : cfg.sweep.depth) add(std::to_string(d), [&](ExperimentConfig& c) { c.set_method_depth(d); });
      break;
  }
  if (out.empty()) throw ConfigError("sweep: no values for axis '" + std::string(to_string(axis)) + "'");
  return out;
}

std::vector<SweepEntry> sweep(const ExperimentConfig& cfg, const Dataset& ds, SweepAxis axis,
                              const ProgressFn& progress) {
  std::vector<SweepEntry> out;
  for (auto& [label, c] : sweep_configs(cfg, axis)) {
    if (progress) progress("sweep " + std::string(to_string(axis)) + "=" + label);
    ExperimentResult r = run_experiment(c, ds, progress);
    out.push_back({label, std::move(c), std::move(r)});
  }
  return out;
}

std::vector<Index> default_posterior_sizes(const ExperimentConfig& cfg, Index train_size) {
  const Index largest = std::min<Index>(train_size, cfg.init_train_size + static_cast<Index>(cfg.n_queries) * cfg.query_size);
  return {cfg.init_train_size, largest};
}

std::vector<PosteriorRecord> depth_posterior_study(const ExperimentConfig& cfg, const Dataset& ds,
                                                   std::vector<Index> sizes, const ProgressFn& progress) {
  cfg.validate();
  if (sizes.empty()) throw ConfigError("posterior: no sizes");
  std::sort(sizes.begin(), sizes.end());
  ExperimentConfig dcfg = cfg;
  dcfg.method = Method::dun;

  std::vector<PosteriorRecord> out;
  for (int r = 0; r < cfg.n_repeats; ++r) {
    const std::uint64_t seed = cfg.seed_base + static_cast<std::uint64_t>(r);
    const DataSplit split = split_standardize(ds, cfg.dataset.ratios, derive_rng(seed, {kSplit})());
    if (sizes.front() < 1 || sizes.back() > split.train.size())
      throw ConfigError("posterior: sizes must lie in [1, " + std::to_string(split.train.size()) + "]");
    std::vector<Index> order(static_cast<std::size_t>(split.train.size()));
    std::iota(order.begin(), order.end(), Index{0});
    Rng subset_rng = derive_rng(seed, {kSubset});
    std::shuffle(order.begin(), order.end(), subset_rng);

    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const Samples subset = take_rows(split.train, std::span<const Index>(order).subspan(0, static_cast<std::size_t>(sizes[k])));
      Rng train_rng = derive_rng(seed, {kTrain, 1000 + k});
      const std::uint64_t init_seed = derive_rng(seed, {kModel, 1000 + k})();
      const Trained model = fit_model(dcfg, Method::dun, subset, split.valid, init_seed, train_rng);
      const auto& q = std::get<DunFit>(model.fit).q;
      out.push_back({r, seed, static_cast<int>(k), sizes[k], q.probs(), q.mean_depth()});
      if (progress) {
        std::ostringstream msg;
        msg << "posterior run " << r << " (seed " << seed << ") n=" << sizes[k] << " mean_depth=" << q.mean_depth();
        progress(msg.str());
      }
    }
  }
  return out;
}

}  // namespace dunal

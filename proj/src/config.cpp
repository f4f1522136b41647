#include "dunal/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace dunal {

using nlohmann::json;

namespace {

// Reads fields from one JSON object and remembers which keys were consumed,
// so leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: '" + where(key) + "' has the wrong type (" + e.what() + ")");
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    read(key, v);
    out = v;
  }

  template <typename T, typename Parse>
  void read_enum(const char* key, T& out, Parse parse) {
    std::string s;
    read(key, s);
    if (j_.contains(key)) out = parse(s);
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw ConfigError("config: unknown key '" + where(key.c_str()) + "'");
  }

 private:
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_dataset(Section s, DatasetSpec& d) {
  s.read("kind", d.kind);
  s.read("name", d.name);
  s.read_optional("size", d.size);
  s.read_optional("noise_std", d.noise_std);
  s.read("seed", d.seed);
  std::string path;
  s.read("path", path);
  if (!path.empty()) d.path = path;
  s.read("target_column", d.delimited.target_column);
  s.read("feature_columns", d.delimited.feature_columns);
  std::string delim;
  s.read("delimiter", delim);
  if (!delim.empty()) {
    if (delim == "whitespace") d.delimited.delimiter = ' ';
    else if (delim.size() == 1) d.delimited.delimiter = delim[0];
    else throw ConfigError("config: dataset.delimiter must be one character or 'whitespace'");
  }
  if (auto r = s.child("split")) {
    r->read("train", d.ratios.train);
    r->read("valid", d.ratios.valid);
    r->read("test", d.ratios.test);
    r->finish();
  }
  s.finish();
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  Section root(j, "");
  root.read("name", cfg.name);
  if (auto d = root.child("dataset")) read_dataset(std::move(*d), cfg.dataset);
  root.read_enum("method", cfg.method, parse_method);

  if (auto a = root.child("acquisition")) {
    a->read_enum("strategy", cfg.acquisition.strategy, parse_strategy);
    a->read("temperature", cfg.acquisition.temperature);
    a->read("zero_temperature_limit", cfg.acquisition.zero_temperature_limit);
    a->read("init_train_size", cfg.init_train_size);
    a->read("n_queries", cfg.n_queries);
    a->read("query_size", cfg.query_size);
    a->finish();
  }

  if (auto n = root.child("network")) {
    n->read("hidden_dim", cfg.hidden_dim);
    if (auto d = n->child("dun")) {
      d->read("depth", cfg.dun.depth);
      d->read("batchnorm", cfg.dun.batchnorm);
      d->read("prior", cfg.dun.prior);
      d->read("prior_rho", cfg.dun.prior_rho);
      d->finish();
    }
    if (auto m = n->child("mcdo")) {
      m->read("depth", cfg.mcdo.depth);
      m->read("dropout_prob", cfg.mcdo.dropout_prob);
      m->read("n_test_samples", cfg.mcdo.n_test_samples);
      m->finish();
    }
    if (auto m = n->child("mfvi")) {
      m->read("depth", cfg.mfvi.depth);
      m->read("n_train_samples", cfg.mfvi.n_train_samples);
      m->read("n_test_samples", cfg.mfvi.n_test_samples);
      m->read("prior_std", cfg.mfvi.prior_std);
      m->read("init_log_std", cfg.mfvi.init_log_std);
      m->finish();
    }
    if (auto g = n->child("sgd")) {
      g->read("depth", cfg.sgd_depth);
      g->finish();
    }
    n->finish();
  }

  if (auto t = root.child("training")) {
    t->read("iterations", cfg.iterations);
    t->read("learning_rate", cfg.optimizer.learning_rate);
    t->read("momentum", cfg.optimizer.momentum);
    t->read("weight_decay", cfg.optimizer.weight_decay);
    t->read("validation_selection", cfg.validation_selection);
    t->read("checkpoint_every", cfg.checkpoint_every);
    t->finish();
  }

  if (auto e = root.child("experiment")) {
    e->read("n_repeats", cfg.n_repeats);
    e->read("seed_base", cfg.seed_base);
    e->read_enum("risk_loss", cfg.risk_loss, parse_risk_loss);
    e->finish();
  }

  if (auto s = root.child("sweep")) {
    s->read("temperature", cfg.sweep.temperature);
    s->read("prior", cfg.sweep.prior);
    s->read("method", cfg.sweep.method);
    s->read("depth", cfg.sweep.depth);
    s->finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json dataset = {{"kind", cfg.dataset.kind},
                  {"name", cfg.dataset.name},
                  {"seed", cfg.dataset.seed},
                  {"split", {{"train", cfg.dataset.ratios.train},
                             {"valid", cfg.dataset.ratios.valid},
                             {"test", cfg.dataset.ratios.test}}}};
  if (cfg.dataset.size) dataset["size"] = *cfg.dataset.size;
  if (cfg.dataset.noise_std) dataset["noise_std"] = *cfg.dataset.noise_std;
  if (cfg.dataset.kind == "file") {
    dataset["path"] = cfg.dataset.path.string();
    dataset["target_column"] = cfg.dataset.delimited.target_column;
    dataset["feature_columns"] = cfg.dataset.delimited.feature_columns;
    dataset["delimiter"] =
        cfg.dataset.delimited.delimiter == ' ' ? std::string("whitespace") : std::string(1, cfg.dataset.delimited.delimiter);
  }
  return {
      {"name", cfg.name},
      {"dataset", dataset},
      {"method", std::string(to_string(cfg.method))},
      {"acquisition",
       {{"strategy", std::string(to_string(cfg.acquisition.strategy))},
        {"temperature", cfg.acquisition.temperature},
        {"zero_temperature_limit", cfg.acquisition.zero_temperature_limit},
        {"init_train_size", cfg.init_train_size},
        {"n_queries", cfg.n_queries},
        {"query_size", cfg.query_size}}},
      {"network",
       {{"hidden_dim", cfg.hidden_dim},
        {"dun",
         {{"depth", cfg.dun.depth},
          {"batchnorm", cfg.dun.batchnorm},
          {"prior", cfg.dun.prior},
          {"prior_rho", cfg.dun.prior_rho}}},
        {"mcdo",
         {{"depth", cfg.mcdo.depth},
          {"dropout_prob", cfg.mcdo.dropout_prob},
          {"n_test_samples", cfg.mcdo.n_test_samples}}},
        {"mfvi",
         {{"depth", cfg.mfvi.depth},
          {"n_train_samples", cfg.mfvi.n_train_samples},
          {"n_test_samples", cfg.mfvi.n_test_samples},
          {"prior_std", cfg.mfvi.prior_std},
          {"init_log_std", cfg.mfvi.init_log_std}}},
        {"sgd", {{"depth", cfg.sgd_depth}}}}},
      {"training",
       {{"iterations", cfg.iterations},
        {"learning_rate", cfg.optimizer.learning_rate},
        {"momentum", cfg.optimizer.momentum},
        {"weight_decay", cfg.optimizer.weight_decay},
        {"validation_selection", cfg.validation_selection},
        {"checkpoint_every", cfg.checkpoint_every}}},
      {"experiment",
       {{"n_repeats", cfg.n_repeats},
        {"seed_base", cfg.seed_base},
        {"risk_loss", std::string(to_string(cfg.risk_loss))}}},
      {"sweep",
       {{"temperature", cfg.sweep.temperature},
        {"prior", cfg.sweep.prior},
        {"method", cfg.sweep.method},
        {"depth", cfg.sweep.depth}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  if (cfg.dataset.kind == "file" && cfg.dataset.path.empty())
    throw ConfigError("config '" + path.string() + "': dataset.path is required for file datasets");
  if (cfg.dataset.kind == "file" && cfg.dataset.path.is_relative()) {
    const char* root = std::getenv("DUN_DATA_DIR");
    const std::filesystem::path base = root && *root ? std::filesystem::path(root) : path.parent_path();
    cfg.dataset.path = base / cfg.dataset.path;
  }
  return cfg;
}

}  // namespace dunal

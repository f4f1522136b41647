#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <map>

#include "dunal/config.hpp"

using namespace dunal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path write_config(const std::string& name, const json& j) {
  const fs::path dir = fs::temp_directory_path() / "dunal_config_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump();
  return p;
}

}  // namespace

TEST_CASE("an empty object yields the defaults") {
  const ExperimentConfig cfg = config_from_json(json::object());
  CHECK(cfg.method == Method::dun);
  CHECK(cfg.n_repeats == 40);
  CHECK(cfg.optimizer.learning_rate == 1e-4);
  CHECK(cfg.optimizer.momentum == 0.9);
  CHECK(cfg.optimizer.weight_decay == 1e-5);
  CHECK(cfg.iterations == 1000);
  CHECK(cfg.acquisition.temperature == 10.0);
  CHECK(cfg.acquisition.strategy == AcquisitionStrategy::bald_stochastic);
  CHECK(cfg.dun.depth == 10);
  CHECK(cfg.hidden_dim == 100);
}

TEST_CASE("sections are read") {
  const json j = json::parse(R"({
    "name": "x",
    "dataset": {"kind": "toy", "name": "foong", "size": 100, "noise_std": 0.2},
    "method": "mcdo",
    "acquisition": {"strategy": "random", "init_train_size": 10, "n_queries": 15, "query_size": 5},
    "network": {"hidden_dim": 50, "mcdo": {"depth": 2, "dropout_prob": 0.05}, "dun": {"prior": "decaying", "prior_rho": 0.5}},
    "training": {"iterations": 10, "learning_rate": 0.01},
    "experiment": {"n_repeats": 3, "seed_base": 100, "risk_loss": "squared"},
    "sweep": {"temperature": [0.5, 2]}
  })");
  const ExperimentConfig cfg = config_from_json(j);
  CHECK(cfg.dataset.name == "foong");
  CHECK(*cfg.dataset.size == 100);
  CHECK(*cfg.dataset.noise_std == 0.2);
  CHECK(cfg.method == Method::mcdo);
  CHECK(cfg.acquisition.strategy == AcquisitionStrategy::random);
  CHECK(cfg.n_queries == 15);
  CHECK(cfg.mcdo.dropout_prob == 0.05);
  CHECK(cfg.method_depth() == 2);
  CHECK(cfg.dun.prior == "decaying");
  CHECK(cfg.optimizer.learning_rate == 0.01);
  CHECK(cfg.optimizer.momentum == 0.9);
  CHECK(cfg.seed_base == 100);
  CHECK(cfg.risk_loss == RiskLoss::squared);
  CHECK(cfg.sweep.temperature == std::vector<double>{0.5, 2.0});

  CHECK(config_from_json(config_to_json(cfg)).name == "x");
  CHECK(config_to_json(config_from_json(config_to_json(cfg))) == config_to_json(cfg));
}

TEST_CASE("invalid configs are rejected with the offending key") {
  const std::map<std::string, std::string> cases{
      {R"({"trainng": {}})", "trainng"},
      {R"({"training": {"lr": 0.1}})", "training.lr"},
      {R"({"method": "ensemble"})", "ensemble"},
      {R"({"acquisition": {"query_size": "ten"}})", "acquisition.query_size"},
      {R"({"acquisition": {"query_size": 0}})", "query_size"},
      {R"({"network": []})", "network"},
      {R"({"dataset": {"delimiter": "tab"}})", "delimiter"},
  };
  for (const auto& [text, needle] : cases) {
    CAPTURE(text);
    try {
      config_from_json(json::parse(text));
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  }
}

TEST_CASE("load_config resolves relative data paths") {
  const fs::path p = write_config("file.json", {{"dataset", {{"kind", "file"}, {"path", "uci/concrete.csv"}}}});
  ::unsetenv("DUN_DATA_DIR");
  CHECK(load_config(p).dataset.path == p.parent_path() / "uci/concrete.csv");
  ::setenv("DUN_DATA_DIR", "/data", 1);
  CHECK(load_config(p).dataset.path == fs::path("/data/uci/concrete.csv"));
  ::unsetenv("DUN_DATA_DIR");

  const fs::path nopath = write_config("nopath.json", {{"dataset", {{"kind", "file"}}}});
  CHECK_THROWS_AS(load_config(nopath), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);

  const fs::path bad = fs::temp_directory_path() / "dunal_config_test" / "bad.json";
  std::ofstream(bad) << "{ \"name\": ";
  CHECK_THROWS_AS(load_config(bad), ConfigError);
}

TEST_CASE("every shipped preset parses") {
  const fs::path dir = fs::path(DUNAL_SOURCE_DIR) / "configs";
  REQUIRE(fs::is_directory(dir));
  int n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const ExperimentConfig cfg = load_config(entry.path());
    CHECK(cfg.name == entry.path().stem().string());
    if (cfg.dataset.kind == "toy") CHECK_NOTHROW(load_dataset(cfg.dataset));
    ++n;
  }
  CHECK(n == 14);
}

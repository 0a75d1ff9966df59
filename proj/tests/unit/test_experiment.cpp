#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "slowfast/experiment.hpp"

using namespace slowfast;
using doctest::Approx;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.model = "constant_sigma";
  cfg.eps_eta = {{0.1, 0.01}, {0.01, 0.001}};
  cfg.n = {10, 20};
  cfg.replications = 4;
  cfg.fine_steps = 2000;
  cfg.seed = 42;
  cfg.estimators.h1 = true;
  cfg.estimators.h2 = true;
  cfg.estimators.tfe = true;
  cfg.estimators.optimizer.starts = 2;
  return cfg;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("slowfast_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("summarize") {
  const auto s = summarize({1.0, 2.0, 3.0});
  CHECK(s.mean == 2.0);
  CHECK(s.sd == 1.0);
  CHECK(s.count == 3);
  const auto f = summarize({1.0, std::nan(""), 3.0});
  CHECK(f.failures == 1);
  CHECK(f.mean == 2.0);
  const auto a = summarize({0.1, 1e10, -1e10, 0.2, 0.3});
  const auto b = summarize({0.3, -1e10, 0.2, 1e10, 0.1});
  CHECK(a.mean == b.mean);
  CHECK(a.sd == b.sd);
  CHECK(std::isnan(summarize({}).mean));
}

TEST_CASE("format_value round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.85}) {
    CHECK(std::stod(format_value(v)) == v);
  }
  CHECK(format_value(std::nan("")) == "nan");
}

TEST_CASE("config validation and JSON") {
  auto cfg = small_config();
  cfg.validate();
  const auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());

  auto j = cfg.to_json();
  j["epsilonn"] = 0.1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
  j = cfg.to_json();
  j["estimator_options"]["optimiser"] = nlohmann::json::object();
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);

  auto bad = cfg;
  bad.replications = 0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.n = {30};
  CHECK_THROWS(bad.validate());  // 2000 not divisible by 30
  bad = cfg;
  bad.eps_eta = {{-0.1, 0.01}};
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.model = "pure_fbm";
  CHECK_THROWS(bad.validate());  // tfe needs a model
  bad = cfg;
  bad.apply_full_scale();
  CHECK(bad.replications == 10000);
  CHECK(bad.fine_steps == 1000000);
}

TEST_CASE("run_experiment is deterministic and thread-count invariant") {
  const auto cfg = small_config();
  const auto a = run_experiment(cfg, Execution::serial);
  const auto b = run_experiment(cfg, Execution::parallel, 3);
  REQUIRE(a.cells.size() == 4);
  for (std::size_t c = 0; c < a.cells.size(); ++c) {
    for (std::size_t e = 0; e < a.cells[c].estimators.size(); ++e) {
      CHECK(a.cells[c].estimators[e].values == b.cells[c].estimators[e].values);
    }
  }
  CHECK(a.all_cells_ok());

  // growing R keeps the first replications
  auto more = cfg;
  more.replications = 6;
  const auto m = run_experiment(more, Execution::serial);
  for (std::size_t r = 0; r < cfg.replications; ++r) {
    CHECK(m.cells[1].estimators[2].values[r] == a.cells[1].estimators[2].values[r]);
  }
}

TEST_CASE("emit and re-read") {
  const auto cfg = small_config();
  const auto res = run_experiment(cfg);
  const auto dir = scratch("emit");
  emit(res, dir);
  CHECK(std::filesystem::exists(dir / "summary_mean.csv"));
  CHECK(std::filesystem::exists(dir / "summary_sd.csv"));
  CHECK(std::filesystem::exists(dir / "theoretical_sd.csv"));
  const auto& cell = res.cells[3];
  const auto back = read_raw_csv(dir / cell.label() / "raw.csv");
  REQUIRE(back.size() == cell.estimators.size());
  for (std::size_t e = 0; e < back.size(); ++e) {
    CHECK(back[e].name == cell.estimators[e].name);
    CHECK(back[e].summary.mean == cell.estimators[e].summary.mean);
    CHECK(back[e].summary.sd == cell.estimators[e].summary.sd);
  }
  std::ifstream in(dir / "summary_mean.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "estimator,epsilon,eta,n=10,n=20");
  std::filesystem::remove_all(dir);
}

TEST_CASE("failed cells are marked") {
  auto cfg = small_config();
  cfg.estimators = {};
  cfg.estimators.h1 = true;
  cfg.eps_eta = {{0.1, 0.01}};
  cfg.T = 2.0;
  cfg.n = {2};  // n = T: h1 rejects every replication
  cfg.replications = 3;
  const auto res = run_experiment(cfg);
  CHECK_FALSE(res.all_cells_ok());
  CHECK(res.cells[0].estimators[0].summary.failures == 3);
  const auto dir = scratch("fail");
  emit(res, dir);
  std::ifstream in(dir / "summary_mean.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().find("FAIL(3)") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped configs validate") {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(SLOWFAST_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    auto cfg = slowfast::ExperimentConfig::from_file(entry.path());
    CHECK_NOTHROW(cfg.validate());
    ++seen;
  }
  CHECK(seen >= 4);
}

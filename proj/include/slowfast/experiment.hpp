#pragma once

// Declarative Monte Carlo studies: config, seeded replications, summaries and
// table output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "slowfast/kernels.hpp"
#include "slowfast/optimize.hpp"

namespace slowfast {

struct EstimatorSelection {
  bool h1 = false;
  bool h2 = false;
  bool tfe = false;
  bool mce = false;
  bool h2_doubled = false;  // h2 uses 2n samples instead of n
  std::size_t ode_steps = 1000;
  std::size_t xi_cells = 512;
  std::optional<double> mce_hurst;  // working Hurst index; defaults to the true one
  OptimizerConfig optimizer;

  std::vector<std::string> names() const;
};

struct ExperimentConfig {
  std::string model = "constant_sigma";  // constant_sigma, variable_sigma or pure_fbm
  std::vector<double> theta0 = {1.0};
  double hurst = 0.85;
  double T = 1.0;
  std::vector<std::pair<double, double>> eps_eta;  // (epsilon, eta) pairs
  std::vector<std::size_t> n;
  std::size_t replications = 500;
  std::size_t fine_steps = 100000;
  std::uint64_t seed = 1;
  EstimatorSelection estimators;
  std::optional<double> lambda;  // unset: sqrt(eta / epsilon) per cell
  std::string output_dir = "out";

  void validate() const;
  /// 10^4 replications on a 10^6-step fine grid.
  void apply_full_scale();

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct Summary {
  std::size_t count = 0;     // finite values
  std::size_t failures = 0;  // non-finite or failed replications
  double mean = 0.0;
  double sd = 0.0;
  double standard_error = 0.0;
};

/// Compensated, order-independent summary of the finite entries of `values`.
Summary summarize(const std::vector<double>& values);

struct EstimatorResult {
  std::string name;
  std::vector<double> values;  // one per replication, NaN on failure
  std::vector<std::string> errors;  // first few failure messages
  Summary summary;
  double theoretical_sd = 0.0;  // NaN where undefined
};

struct CellResult {
  std::size_t index = 0;
  double epsilon = 0.0;
  double eta = 0.0;
  std::size_t n = 0;
  std::vector<EstimatorResult> estimators;
  bool failed = false;  // more than 10% of replications failed for some estimator

  std::string label() const;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  std::vector<std::string> warnings;

  bool all_cells_ok() const;
};

/// Fraction of failed replications above which a cell is marked failed.
inline constexpr double kFailureThreshold = 0.10;

ExperimentResult run_experiment(const ExperimentConfig& cfg, Execution exec = Execution::parallel, int threads = 0);

/// Writes <out>/<cell>/raw.csv, summary_mean.csv, summary_sd.csv,
/// summary_se.csv and theoretical_sd.csv.
void emit(const ExperimentResult& result, const std::filesystem::path& out);

/// Re-reads a raw.csv written by `emit`.
std::vector<EstimatorResult> read_raw_csv(const std::filesystem::path& path);

/// Decimal text with 17 significant digits ("nan" for NaN).
std::string format_value(double v);

}  // namespace slowfast

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "slowfast/drift.hpp"
#include "slowfast/experiment.hpp"
#include "slowfast/hurst.hpp"

using namespace slowfast;
using nlohmann::json;

namespace {

/// Uniformly spaced observations from a CSV with header t,x_1,...,x_m.
ObservationSeries read_observations(const std::string& path, std::optional<double> horizon) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  std::vector<std::vector<double>> rows;
  std::size_t cols = 0;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) ++cols;
  }
  if (cols < 2) throw std::runtime_error(path + ": need columns t,x_1,...");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != cols) throw std::runtime_error(path + ": ragged row " + std::to_string(rows.size() + 2));
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw std::runtime_error(path + ": need at least two observations");
  ObservationSeries obs;
  obs.n = rows.size() - 1;
  obs.T = horizon.value_or(rows.back()[0] - rows.front()[0]);
  if (rows.front()[0] != 0.0 && !horizon) throw std::runtime_error(path + ": first time must be 0");
  const double dt = obs.T / static_cast<double>(obs.n);
  obs.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols - 1));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!horizon && std::abs(rows[k][0] - k * dt) > 1e-9 * std::max(1.0, obs.T)) {
      throw std::runtime_error(path + ": times are not uniformly spaced");
    }
    for (std::size_t j = 1; j < cols; ++j) obs.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j - 1)) = rows[k][j];
  }
  return obs;
}

Eigen::MatrixXd sigma_matrix(const std::vector<double>& entries, std::size_t rows) {
  if (entries.empty() || entries.size() % rows != 0) {
    throw std::invalid_argument("--sigma-bar: need a multiple of " + std::to_string(rows) + " entries (row-major)");
  }
  const auto cols = entries.size() / rows;
  Eigen::MatrixXd s(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = entries[i * cols + j];
  }
  return s;
}

Box parse_box(const std::vector<std::string>& specs, const Box& fallback) {
  if (specs.empty()) return fallback;
  Box b;
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("--theta-box: expected lo:hi, got " + s);
    b.lower.push_back(std::stod(s.substr(0, colon)));
    b.upper.push_back(std::stod(s.substr(colon + 1)));
  }
  b.validate();
  return b;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << name << ',' << i << ',' << j << ',' << format_value(m(i, j)) << '\n';
  }
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot write " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slow-fast systems driven by fractional Brownian motion: simulation and estimation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Euler-Maruyama path of a built-in model, written as CSV");
  std::string sim_model = "constant_sigma", sim_out;
  std::vector<double> sim_theta{1.0};
  double sim_h = 0.85, sim_eps = 0.1, sim_eta = 0.01, sim_T = 1.0;
  std::size_t sim_steps = 100000, sim_n = 0;
  std::uint64_t sim_seed = 1;
  bool sim_fast = false;
  sim->add_option("--model", sim_model, "constant_sigma or variable_sigma")->capture_default_str();
  sim->add_option("--theta", sim_theta, "drift parameter")->capture_default_str();
  sim->add_option("--hurst", sim_h, "Hurst index of the slow noise")->capture_default_str();
  sim->add_option("--epsilon", sim_eps)->capture_default_str();
  sim->add_option("--eta", sim_eta)->capture_default_str();
  sim->add_option("--T", sim_T, "horizon")->capture_default_str();
  sim->add_option("--fine-steps", sim_steps)->capture_default_str();
  sim->add_option("--n", sim_n, "observations to keep (default: every fine step)");
  sim->add_option("--seed", sim_seed)->capture_default_str();
  sim->add_flag("--fast", sim_fast, "also write the fast component");
  sim->add_option("-o,--output", sim_out, "CSV path (default stdout)");

  // estimate-hurst
  auto* eh = app.add_subcommand("estimate-hurst", "Hurst index from observations t,x_1,...");
  std::string eh_in, eh_method = "h1", eh_format = "json";
  double eh_eps = 0.1;
  std::vector<double> eh_sigma{1.0};
  std::optional<double> eh_T;
  eh->add_option("input", eh_in, "observation CSV")->required();
  eh->add_option("--method", eh_method)->check(CLI::IsMember({"h1", "h2"}))->capture_default_str();
  eh->add_option("--epsilon", eh_eps, "noise scale (h1)")->capture_default_str();
  eh->add_option("--sigma-bar", eh_sigma, "averaged diffusion, row-major")->capture_default_str();
  eh->add_option("--T", eh_T, "horizon (default: last time in the file)");
  eh->add_option("--format", eh_format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();

  // estimate-drift
  auto* ed = app.add_subcommand("estimate-drift", "TFE or MCE drift estimate from observations t,x_1,...");
  std::string ed_in, ed_method = "tfe", ed_model = "constant_sigma";
  std::vector<std::string> ed_box;
  double ed_h = 0.85, ed_lambda = 0.0;
  std::optional<double> ed_eps, ed_true_h, ed_T;
  std::size_t ed_ode = 1000, ed_cells = 512, ed_starts = 8;
  ed->add_option("input", ed_in, "observation CSV")->required();
  ed->add_option("--method", ed_method)->check(CLI::IsMember({"tfe", "mce"}))->capture_default_str();
  ed->add_option("--model", ed_model)->capture_default_str();
  ed->add_option("--theta-box", ed_box, "lo:hi per parameter (default: the model's box)");
  ed->add_option("--hurst", ed_h, "working Hurst index of the MCE")->capture_default_str();
  ed->add_option("--lambda", ed_lambda, "Brownian weight of the fluctuation limit")->capture_default_str();
  ed->add_option("--ode-steps", ed_ode)->capture_default_str();
  ed->add_option("--xi-cells", ed_cells)->capture_default_str();
  ed->add_option("--starts", ed_starts, "optimizer multi-starts")->capture_default_str();
  ed->add_option("--epsilon", ed_eps, "report the covariance eps * M at this epsilon");
  ed->add_option("--true-hurst", ed_true_h, "Hurst index used in the covariance (default --hurst)");
  ed->add_option("--T", ed_T, "horizon (default: last time in the file)");

  // variance
  auto* var = app.add_subcommand("variance", "Asymptotic variances M, Mbar and M^H as CSV");
  std::string var_model = "constant_sigma", var_out;
  std::vector<double> var_theta{1.0};
  double var_h = 0.85, var_lambda = 0.0, var_T = 1.0;
  std::optional<double> var_mce_h;
  std::size_t var_n = 16, var_cells = 512;
  var->add_option("--model", var_model)->capture_default_str();
  var->add_option("--theta", var_theta)->capture_default_str();
  var->add_option("--hurst", var_h, "true Hurst index")->capture_default_str();
  var->add_option("--mce-hurst", var_mce_h, "working Hurst index of the MCE (default --hurst)");
  var->add_option("--lambda", var_lambda)->capture_default_str();
  var->add_option("--n", var_n)->capture_default_str();
  var->add_option("--T", var_T)->capture_default_str();
  var->add_option("--xi-cells", var_cells)->capture_default_str();
  var->add_option("-o,--output", var_out, "CSV path (default stdout)");

  // experiment
  auto* ex = app.add_subcommand("experiment", "Monte Carlo study from a JSON config");
  std::string ex_config, ex_out;
  int ex_threads = 0;
  bool ex_full = false, ex_serial = false;
  ex->add_option("--config", ex_config)->required();
  ex->add_option("--out", ex_out, "output directory (default: config output_dir)");
  ex->add_option("--threads", ex_threads, "worker threads (0: OpenMP default)")->capture_default_str();
  ex->add_flag("--full-scale", ex_full, "10^4 replications on 10^6 fine steps");
  ex->add_flag("--serial", ex_serial, "run replications without OpenMP");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      const auto model = builtin_model(sim_model);
      const SimConfig cfg{sim_eps, sim_eta, sim_T, sim_steps, sim_seed};
      const auto path = euler_maruyama(model, sim_theta, HurstIndex(sim_h), cfg, RandomStream(sim_seed));
      for (const auto& w : path.warnings) std::cerr << "warning: " << w << '\n';
      const std::size_t n = sim_n == 0 ? sim_steps : sim_n;
      const auto obs = subsample(path, n);
      const std::size_t stride = sim_steps / n;
      std::ofstream file;
      std::ostream& out = open_output(sim_out, file);
      out << 't';
      for (Eigen::Index j = 0; j < path.slow.cols(); ++j) out << ",x_" << j + 1;
      if (sim_fast) {
        for (Eigen::Index j = 0; j < path.fast.cols(); ++j) out << ",y_" << j + 1;
      }
      out << '\n';
      for (std::size_t k = 0; k <= n; ++k) {
        out << format_value(obs.time(k));
        for (Eigen::Index j = 0; j < obs.values.cols(); ++j) out << ',' << format_value(obs.values(static_cast<Eigen::Index>(k), j));
        if (sim_fast) {
          for (Eigen::Index j = 0; j < path.fast.cols(); ++j) {
            out << ',' << format_value(path.fast(static_cast<Eigen::Index>(k * stride), j));
          }
        }
        out << '\n';
      }
    } else if (*eh) {
      const auto obs = read_observations(eh_in, eh_T);
      const auto sigma = sigma_matrix(eh_sigma, obs.dim());
      const auto e = eh_method == "h1" ? estimate_h1(obs, eh_eps, sigma) : estimate_h2(obs, sigma);
      if (eh_format == "json") {
        std::cout << json{{"method", to_string(e.method)},
                          {"estimate", e.point},
                          {"theoretical_sd", std::isnan(e.theoretical_sd) ? json(nullptr) : json(e.theoretical_sd)},
                          {"statistic", e.statistic},
                          {"in_range", e.in_range},
                          {"clamped", e.clamped}}
                         .dump(2)
                  << '\n';
      } else {
        std::cout << "method,estimate,theoretical_sd,statistic,in_range,clamped\n"
                  << to_string(e.method) << ',' << format_value(e.point) << ',' << format_value(e.theoretical_sd) << ','
                  << format_value(e.statistic) << ',' << e.in_range << ',' << e.clamped << '\n';
      }
    } else if (*ed) {
      const auto obs = read_observations(ed_in, ed_T);
      const auto avg = averaged_system(ed_model, ed_lambda);
      const Box box = parse_box(ed_box, avg.theta_box);
      OptimizerConfig opt;
      opt.starts = ed_starts;
      QuadratureConfig q;
      q.cells = ed_cells;
      std::optional<VarianceRequest> vr;
      if (ed_eps) vr = VarianceRequest{*ed_eps, ed_true_h.value_or(ed_h), q};
      DriftEstimate est;
      if (ed_method == "tfe") {
        est = estimate_tfe(avg, obs, box, TfeOptions{ed_ode, opt, vr});
      } else {
        est = estimate_mce(avg, obs, box, MceOptions{ed_h, q, opt, vr});
      }
      json starts = json::array();
      for (const auto& s : est.diagnostics.starts) {
        starts.push_back({{"start", s.start},
                          {"point", s.point},
                          {"value", s.value},
                          {"iterations", s.iterations},
                          {"converged", s.converged},
                          {"stalled", s.stalled},
                          {"failure", s.failure}});
      }
      json rec = {{"method", to_string(est.method)},
                  {"theta", est.point},
                  {"contrast", est.contrast},
                  {"diagnostics",
                   {{"boundary_hit", est.diagnostics.boundary_hit},
                    {"multiple_minima", est.diagnostics.multiple_minima},
                    {"evaluations", est.diagnostics.evaluations},
                    {"starts", starts}}}};
      rec["asymptotic"] = est.asymptotic ? matrix_json(*est.asymptotic) : json(nullptr);
      rec["covariance"] = est.covariance ? matrix_json(*est.covariance) : json(nullptr);
      std::cout << rec.dump(2) << '\n';
    } else if (*var) {
      const auto avg = averaged_system(var_model, var_lambda);
      QuadratureConfig q;
      q.cells = var_cells;
      const HurstIndex H(var_h);
      const HurstIndex Hp(var_mce_h.value_or(var_h));
      const auto M = tfe_variance(avg, var_theta, H, var_n, var_T, q);
      const auto Mbar = tfe_variance_limit(avg, var_theta, H, var_T, q);
      const auto MH = mce_variance(avg, var_theta, H, Hp, var_n, var_T, q);
      std::ofstream file;
      std::ostream& out = open_output(var_out, file);
      out << "matrix,row,col,value\n";
      write_matrix_csv(out, "M", M);
      write_matrix_csv(out, "Mbar", Mbar);
      write_matrix_csv(out, "MH", MH);
      const auto cmp = variance_comparison(M, MH);
      std::cerr << "min eigenvalue of M - M^H: " << cmp.min_eigenvalue << (cmp.passed ? " (PSD)" : " (not PSD)") << '\n';
    } else if (*ex) {
      auto cfg = ExperimentConfig::from_file(ex_config);
      if (ex_full) cfg.apply_full_scale();
      if (!ex_out.empty()) cfg.output_dir = ex_out;
      cfg.validate();
      const auto res = run_experiment(cfg, ex_serial ? Execution::serial : Execution::parallel, ex_threads);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      emit(res, cfg.output_dir);
      for (const auto& cell : res.cells) {
        std::cout << cell.label();
        for (const auto& e : cell.estimators) {
          std::cout << "  " << e.name << " mean=" << format_value(e.summary.mean) << " sd=" << format_value(e.summary.sd)
                    << " failures=" << e.summary.failures;
        }
        std::cout << (cell.failed ? "  FAILED" : "") << '\n';
      }
      return res.all_cells_ok() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "slowfast/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <omp.h>

#include "slowfast/averaging.hpp"
#include "slowfast/drift.hpp"
#include "slowfast/hurst.hpp"
#include "slowfast/simulate.hpp"

namespace slowfast {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kKeptErrors = 5;

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

bool is_pure_fbm(const ExperimentConfig& cfg) { return cfg.model == "pure_fbm"; }

std::string trim_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::vector<std::string> EstimatorSelection::names() const {
  std::vector<std::string> out;
  if (h1) out.push_back("h1");
  if (h2) out.push_back("h2");
  if (tfe) out.push_back("tfe");
  if (mce) out.push_back("mce");
  return out;
}

void ExperimentConfig::validate() const {
  if (model != "pure_fbm") builtin_model(model);
  if (replications < 1) throw std::invalid_argument("config: replications must be >= 1");
  if (!(hurst > 0.0 && hurst < 1.0)) throw std::invalid_argument("config: hurst must lie in (0, 1)");
  if (!(T > 0.0)) throw std::invalid_argument("config: T must be positive");
  if (eps_eta.empty() || n.empty()) throw std::invalid_argument("config: empty (epsilon, eta) or n grid");
  for (const auto& [e, h] : eps_eta) {
    if (!(e > 0.0) || !(h > 0.0)) throw std::invalid_argument("config: epsilon and eta must be positive");
  }
  if (lambda && !(*lambda >= 0.0)) throw std::invalid_argument("config: lambda must be >= 0");
  if (estimators.names().empty()) throw std::invalid_argument("config: no estimator selected");
  if (is_pure_fbm(*this) && (estimators.tfe || estimators.mce)) {
    throw std::invalid_argument("config: pure_fbm supports only the Hurst estimators");
  }
  if (!is_pure_fbm(*this)) {
    const Box box = builtin_model(model).theta_box;
    if (!box.contains(theta0)) throw std::invalid_argument("config: theta0 outside the model's parameter box");
  }
  if (fine_steps < 1) throw std::invalid_argument("config: fine_steps must be >= 1");
  for (std::size_t k : n) {
    if (k < 2) throw std::invalid_argument("config: every n must be >= 2");
    const std::size_t needed = estimators.h2 && estimators.h2_doubled ? 2 * k : k;
    if (fine_steps % needed != 0) {
      throw std::invalid_argument("config: fine_steps = " + std::to_string(fine_steps) + " not divisible by " +
                                  std::to_string(needed));
    }
    if (estimators.h2 && !estimators.h2_doubled && k % 2 != 0) {
      throw std::invalid_argument("config: h2 needs an even sample count, got n = " + std::to_string(k));
    }
  }
  if (estimators.mce_hurst && !(*estimators.mce_hurst > 0.0 && *estimators.mce_hurst < 1.0)) {
    throw std::invalid_argument("config: mce_hurst must lie in (0, 1)");
  }
}

void ExperimentConfig::apply_full_scale() {
  replications = 10000;
  fine_steps = 1000000;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown(j, {"model", "theta0", "hurst", "T", "cells", "n", "replications", "fine_steps", "seed", "lambda",
                     "output_dir", "estimators", "estimator_options"},
                 "top level");
  ExperimentConfig c;
  c.model = j.value("model", c.model);
  if (j.contains("theta0")) c.theta0 = j.at("theta0").get<std::vector<double>>();
  c.hurst = j.value("hurst", c.hurst);
  c.T = j.value("T", c.T);
  for (const auto& cell : j.at("cells")) {
    reject_unknown(cell, {"epsilon", "eta"}, "cells entry");
    c.eps_eta.emplace_back(cell.at("epsilon").get<double>(), cell.at("eta").get<double>());
  }
  c.n = j.at("n").get<std::vector<std::size_t>>();
  c.replications = j.value("replications", c.replications);
  c.fine_steps = j.value("fine_steps", c.fine_steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
  c.output_dir = j.value("output_dir", c.output_dir);
  for (const auto& e : j.at("estimators")) {
    const auto name = e.get<std::string>();
    if (name == "h1") {
      c.estimators.h1 = true;
    } else if (name == "h2") {
      c.estimators.h2 = true;
    } else if (name == "tfe") {
      c.estimators.tfe = true;
    } else if (name == "mce") {
      c.estimators.mce = true;
    } else {
      throw std::invalid_argument("config: unknown estimator '" + name + "'");
    }
  }
  if (j.contains("estimator_options")) {
    const json& o = j.at("estimator_options");
    reject_unknown(o, {"h2_doubled", "ode_steps", "xi_cells", "mce_hurst", "optimizer"}, "estimator_options");
    auto& s = c.estimators;
    s.h2_doubled = o.value("h2_doubled", s.h2_doubled);
    s.ode_steps = o.value("ode_steps", s.ode_steps);
    s.xi_cells = o.value("xi_cells", s.xi_cells);
    if (o.contains("mce_hurst") && !o.at("mce_hurst").is_null()) s.mce_hurst = o.at("mce_hurst").get<double>();
    if (o.contains("optimizer")) {
      const json& p = o.at("optimizer");
      reject_unknown(p, {"starts", "max_iterations", "gradient_tolerance", "fd_step"}, "optimizer");
      s.optimizer.starts = p.value("starts", s.optimizer.starts);
      s.optimizer.max_iterations = p.value("max_iterations", s.optimizer.max_iterations);
      s.optimizer.gradient_tolerance = p.value("gradient_tolerance", s.optimizer.gradient_tolerance);
      s.optimizer.fd_step = p.value("fd_step", s.optimizer.fd_step);
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json cells = json::array();
  for (const auto& [e, h] : eps_eta) cells.push_back({{"epsilon", e}, {"eta", h}});
  const auto& s = estimators;
  json opt = {{"h2_doubled", s.h2_doubled},
              {"ode_steps", s.ode_steps},
              {"xi_cells", s.xi_cells},
              {"mce_hurst", s.mce_hurst ? json(*s.mce_hurst) : json(nullptr)},
              {"optimizer",
               {{"starts", s.optimizer.starts},
                {"max_iterations", s.optimizer.max_iterations},
                {"gradient_tolerance", s.optimizer.gradient_tolerance},
                {"fd_step", s.optimizer.fd_step}}}};
  return {{"model", model},
          {"theta0", theta0},
          {"hurst", hurst},
          {"T", T},
          {"cells", cells},
          {"n", n},
          {"replications", replications},
          {"fine_steps", fine_steps},
          {"seed", seed},
          {"lambda", lambda ? json(*lambda) : json(nullptr)},
          {"output_dir", output_dir},
          {"estimators", s.names()},
          {"estimator_options", opt}};
}

Summary summarize(const std::vector<double>& values) {
  std::vector<double> v;
  v.reserve(values.size());
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  Summary s;
  s.count = v.size();
  s.failures = values.size() - v.size();
  if (v.empty()) {
    s.mean = s.sd = s.standard_error = kNaN;
    return s;
  }
  std::sort(v.begin(), v.end());
  auto neumaier = [](const std::vector<double>& xs) {
    double sum = 0.0;
    double comp = 0.0;
    for (double x : xs) {
      const double t = sum + x;
      comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
      sum = t;
    }
    return sum + comp;
  };
  s.mean = neumaier(v) / static_cast<double>(v.size());
  if (v.size() < 2) {
    s.sd = s.standard_error = kNaN;
    return s;
  }
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - s.mean) * (v[i] - s.mean);
  std::sort(sq.begin(), sq.end());
  s.sd = std::sqrt(neumaier(sq) / static_cast<double>(v.size() - 1));
  s.standard_error = s.sd / std::sqrt(static_cast<double>(v.size()));
  return s;
}

std::string CellResult::label() const {
  return "eps=" + trim_number(epsilon) + "_eta=" + trim_number(eta) + "_n=" + std::to_string(n);
}

bool ExperimentResult::all_cells_ok() const {
  return std::none_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.failed; });
}

namespace {

struct CellPlan {
  CellResult result;
  double lambda = 0.0;
};

double theoretical_for(const std::string& name, const ExperimentConfig& cfg, const CellPlan& plan,
                       const Eigen::MatrixXd& sigma_bar) {
  const HurstIndex H(cfg.hurst);
  const auto& cell = plan.result;
  const double n = static_cast<double>(cell.n);
  if (name == "h1") return theoretical_sd_h1(n, cfg.T, H, sigma_bar);
  if (name == "h2") return theoretical_sd_h2(cfg.estimators.h2_doubled ? 2.0 * n : n, H, sigma_bar);
  const AveragedSystem avg = averaged_system(cfg.model, plan.lambda);
  QuadratureConfig q;
  q.cells = cfg.estimators.xi_cells;
  Eigen::MatrixXd M;
  if (name == "tfe") {
    M = cell.n <= kTfeLimitThreshold ? tfe_variance(avg, cfg.theta0, H, cell.n, cfg.T, q)
                                     : tfe_variance_limit(avg, cfg.theta0, H, cfg.T, q);
  } else {
    const HurstIndex Hp(cfg.estimators.mce_hurst.value_or(cfg.hurst));
    M = mce_variance(avg, cfg.theta0, H, Hp, cell.n, cfg.T, q);
  }
  return std::sqrt(cell.epsilon * M(0, 0));
}

void run_replication(const ExperimentConfig& cfg, const CellPlan& plan, const SlowFastModel* model,
                     const AveragedSystem* avg, const FbmSampler& sampler, std::size_t r,
                     std::vector<std::vector<double>>& values, std::vector<std::vector<std::string>>& errors) {
  const auto& cell = plan.result;
  const auto& names = cfg.estimators.names();
  const RandomStream stream(cfg.seed, {cell.index, r});
  const Eigen::MatrixXd sigma_bar = avg ? avg->sigma_bar : Eigen::MatrixXd::Identity(1, 1);

  ObservationSeries fine;
  try {
    if (model) {
      SimConfig sc{cell.epsilon, cell.eta, cfg.T, cfg.fine_steps, cfg.seed};
      const SimPath path = euler_maruyama(*model, cfg.theta0, sampler, sc, stream);
      fine = subsample(path, cfg.fine_steps);
    } else {
      fine = pure_fbm_observations(sampler, cell.epsilon, sigma_bar, stream);
    }
  } catch (const std::exception& e) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      values[k][r] = kNaN;
      errors[k][r] = std::string("simulation: ") + e.what();
    }
    return;
  }

  for (std::size_t k = 0; k < names.size(); ++k) {
    const std::string& name = names[k];
    try {
      double v = kNaN;
      if (name == "h1") {
        v = estimate_h1(subsample(fine, cell.n), cell.epsilon, sigma_bar).point;
      } else if (name == "h2") {
        v = estimate_h2(subsample(fine, cfg.estimators.h2_doubled ? 2 * cell.n : cell.n), sigma_bar).point;
      } else if (name == "tfe") {
        TfeOptions opt;
        opt.ode_steps = cfg.estimators.ode_steps;
        opt.optimizer = cfg.estimators.optimizer;
        v = estimate_tfe(*avg, subsample(fine, cell.n), avg->theta_box, opt).point[0];
      } else {
        MceOptions opt;
        opt.hurst_param = cfg.estimators.mce_hurst.value_or(cfg.hurst);
        opt.quadrature.cells = cfg.estimators.xi_cells;
        opt.quadrature.exec = Execution::serial;
        opt.optimizer = cfg.estimators.optimizer;
        v = estimate_mce(*avg, subsample(fine, cell.n), avg->theta_box, opt).point[0];
      }
      values[k][r] = v;
      if (!std::isfinite(v)) errors[k][r] = "non-finite estimate";
    } catch (const std::exception& e) {
      values[k][r] = kNaN;
      errors[k][r] = e.what();
    }
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, Execution exec, int threads) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  const auto names = cfg.estimators.names();
  const HurstIndex H(cfg.hurst);
  const std::size_t R = cfg.replications;

  std::optional<SlowFastModel> model;
  if (!is_pure_fbm(cfg)) model = builtin_model(cfg.model);

  std::size_t index = 0;
  for (const auto& [eps, eta] : cfg.eps_eta) {
    for (std::size_t n : cfg.n) {
      CellPlan plan;
      plan.result.index = index++;
      plan.result.epsilon = eps;
      plan.result.eta = eta;
      plan.result.n = n;
      plan.lambda = cfg.lambda.value_or(std::sqrt(eta / eps));

      std::optional<AveragedSystem> avg;
      if (model) avg = averaged_system(cfg.model, plan.lambda);
      const Eigen::MatrixXd sigma_bar = avg ? avg->sigma_bar : Eigen::MatrixXd::Identity(1, 1);

      const double delta = cfg.T / static_cast<double>(n);
      if ((cfg.estimators.tfe || cfg.estimators.mce) && (std::sqrt(eps) + std::sqrt(eta)) / delta > 1.0) {
        res.warnings.push_back("cell " + plan.result.label() +
                               ": (sqrt(eps) + sqrt(eta)) / Delta > 1, outside the high-frequency regime");
      }
      if (model && eta < 10.0 * cfg.T / static_cast<double>(cfg.fine_steps)) {
        res.warnings.push_back("cell " + plan.result.label() + ": eta below 10 fine steps");
      }

      const FbmSampler sampler(cfg.fine_steps, cfg.T, H);
      std::vector<std::vector<double>> values(names.size(), std::vector<double>(R, kNaN));
      std::vector<std::vector<std::string>> errors(names.size(), std::vector<std::string>(R));

      const SlowFastModel* mp = model ? &*model : nullptr;
      const AveragedSystem* ap = avg ? &*avg : nullptr;
      if (exec == Execution::serial) {
        for (std::size_t r = 0; r < R; ++r) run_replication(cfg, plan, mp, ap, sampler, r, values, errors);
      } else {
        const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
        for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(R); ++r) {
          run_replication(cfg, plan, mp, ap, sampler, static_cast<std::size_t>(r), values, errors);
        }
      }

      for (std::size_t k = 0; k < names.size(); ++k) {
        EstimatorResult er;
        er.name = names[k];
        er.values = std::move(values[k]);
        for (const auto& e : errors[k]) {
          if (!e.empty() && er.errors.size() < kKeptErrors) er.errors.push_back(e);
        }
        er.summary = summarize(er.values);
        try {
          er.theoretical_sd = theoretical_for(er.name, cfg, plan, sigma_bar);
        } catch (const std::exception& e) {
          er.theoretical_sd = kNaN;
          res.warnings.push_back("cell " + plan.result.label() + ": theoretical sd for " + er.name + ": " + e.what());
        }
        if (static_cast<double>(er.summary.failures) > kFailureThreshold * static_cast<double>(R)) plan.result.failed = true;
        plan.result.estimators.push_back(std::move(er));
      }
      res.cells.push_back(std::move(plan.result));
    }
  }
  return res;
}

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("format_value: conversion failed");
  return std::string(buf, end);
}

namespace {

double parse_value(const std::string& s) {
  if (s == "nan") return kNaN;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::runtime_error("bad number in CSV: " + s);
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

void write_table(const ExperimentResult& res, const std::filesystem::path& file,
                 double (*pick)(const EstimatorResult&), bool mark_failures) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  const auto& cfg = res.config;
  out << "estimator,epsilon,eta";
  for (std::size_t n : cfg.n) out << ",n=" << n;
  out << '\n';
  const auto names = cfg.estimators.names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    for (const auto& [eps, eta] : cfg.eps_eta) {
      out << names[k] << ',' << format_value(eps) << ',' << format_value(eta);
      for (std::size_t n : cfg.n) {
        const auto it = std::find_if(res.cells.begin(), res.cells.end(), [&](const CellResult& c) {
          return c.epsilon == eps && c.eta == eta && c.n == n;
        });
        const EstimatorResult& er = it->estimators[k];
        const bool over = static_cast<double>(er.summary.failures) >
                          kFailureThreshold * static_cast<double>(er.values.size());
        if (mark_failures && (er.summary.count == 0 || over)) {
          out << ",FAIL(" << er.summary.failures << ')';
        } else {
          out << ',' << format_value(pick(er));
        }
      }
      out << '\n';
    }
  }
}

}  // namespace

void emit(const ExperimentResult& res, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  for (const auto& cell : res.cells) {
    const auto dir = out / cell.label();
    std::filesystem::create_directories(dir);
    std::ofstream raw(dir / "raw.csv");
    if (!raw) throw std::runtime_error("cannot write " + (dir / "raw.csv").string());
    raw << "replication";
    for (const auto& e : cell.estimators) raw << ',' << e.name;
    raw << '\n';
    const std::size_t R = cell.estimators.empty() ? 0 : cell.estimators.front().values.size();
    for (std::size_t r = 0; r < R; ++r) {
      raw << r;
      for (const auto& e : cell.estimators) raw << ',' << format_value(e.values[r]);
      raw << '\n';
    }
  }
  write_table(res, out / "summary_mean.csv", [](const EstimatorResult& e) { return e.summary.mean; }, true);
  write_table(res, out / "summary_sd.csv", [](const EstimatorResult& e) { return e.summary.sd; }, true);
  write_table(res, out / "summary_se.csv", [](const EstimatorResult& e) { return e.summary.standard_error; }, true);
  write_table(res, out / "theoretical_sd.csv", [](const EstimatorResult& e) { return e.theoretical_sd; }, false);

  json meta = {{"config", res.config.to_json()}, {"warnings", res.warnings}, {"all_cells_ok", res.all_cells_ok()}};
  json cells = json::array();
  for (const auto& c : res.cells) {
    json est = json::object();
    for (const auto& e : c.estimators) {
      est[e.name] = {{"count", e.summary.count}, {"failures", e.summary.failures}, {"errors", e.errors}};
    }
    cells.push_back({{"label", c.label()}, {"failed", c.failed}, {"estimators", est}});
  }
  meta["cells"] = cells;
  std::ofstream(out / "run.json") << meta.dump(2) << '\n';
}

std::vector<EstimatorResult> read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty raw CSV " + path.string());
  const auto header = split(line);
  std::vector<EstimatorResult> out(header.size() - 1);
  for (std::size_t k = 1; k < header.size(); ++k) out[k - 1].name = header[k];
  while (std::getline(in, line)) {
    const auto fields = split(line);
    if (fields.size() != header.size()) throw std::runtime_error("ragged raw CSV " + path.string());
    for (std::size_t k = 1; k < fields.size(); ++k) out[k - 1].values.push_back(parse_value(fields[k]));
  }
  for (auto& e : out) e.summary = summarize(e.values);
  return out;
}

}  // namespace slowfast

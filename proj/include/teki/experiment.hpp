#pragma once

// Experiment configuration, single runs, Table 1 sweeps and their file outputs.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "teki/diagnostics.hpp"
#include "teki/eki.hpp"
#include "teki/gauss_newton.hpp"
#include "teki/models/problems.hpp"

namespace teki {

using nlohmann::json;

struct ExperimentConfig {
  ModelKind model = ModelKind::l96;
  /// "1".."10", "vanilla" or "custom" (uses beta / gamma below).
  std::string setup = "2";
  double beta = 0.2;
  double gamma = 0.9;
  /// 0 selects the model default.
  Index k_ensemble = 0;
  int n_iters = 23;
  std::uint64_t seed = 0;
  double lambda = 2.0;
  double iota = 0.01;
  double h0 = 0.5;
  double alpha0 = 0.2;
  UpdateMode mode = UpdateMode::transform;
  bool run_gn = false;
  std::optional<Mollifier> mollifier;
  bool full = false;
  bool diagnostics = true;
  /// Seed of the L96 climatology; kept apart from `seed` so all runs share one prior.
  std::uint64_t climatology_seed = 0;
  std::string output_dir;
};

inline Schedule make_schedule(const ExperimentConfig& cfg) {
  if (cfg.setup == "vanilla") return Schedule::vanilla_schedule(cfg.h0);
  if (cfg.setup == "custom") return Schedule::custom(cfg.beta, cfg.gamma, cfg.h0, cfg.alpha0);
  int setup = 0;
  try {
    std::size_t used = 0;
    setup = std::stoi(cfg.setup, &used);
    if (used != cfg.setup.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("setup must be 1..10, vanilla or custom, got '" + cfg.setup + "'");
  }
  return Schedule::table_setup(setup, cfg.h0, cfg.alpha0);
}

inline void validate(const ExperimentConfig& cfg) {
  make_schedule(cfg);
  if (cfg.n_iters < 0) throw ConfigError("n_iters must be nonnegative");
  if (cfg.k_ensemble < 0 || cfg.k_ensemble == 1) throw ConfigError("ensemble size must be at least 2");
  if (!(cfg.lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(cfg.iota > 0.0)) throw ConfigError("iota must be positive (it sets Gamma = iota^2 I)");
  if (cfg.mollifier && !(cfg.mollifier->radius > 0.0 && cfg.mollifier->constant > 0.0))
    throw ConfigError("mollifier radius and constant must be positive");
}

inline std::string to_string(UpdateMode mode) { return mode == UpdateMode::transform ? "transform" : "stochastic"; }

inline json config_to_json(const ExperimentConfig& cfg) {
  json j = {{"model", to_string(cfg.model)},
            {"setup", cfg.setup},
            {"beta", cfg.beta},
            {"gamma", cfg.gamma},
            {"k_ensemble", cfg.k_ensemble},
            {"n_iters", cfg.n_iters},
            {"seed", cfg.seed},
            {"lambda", cfg.lambda},
            {"iota", cfg.iota},
            {"h0", cfg.h0},
            {"alpha0", cfg.alpha0},
            {"mode", to_string(cfg.mode)},
            {"run_gn", cfg.run_gn},
            {"full", cfg.full},
            {"diagnostics", cfg.diagnostics},
            {"climatology_seed", cfg.climatology_seed},
            {"output_dir", cfg.output_dir}};
  j["mollifier"] = cfg.mollifier ? json{{"radius", cfg.mollifier->radius}, {"constant", cfg.mollifier->constant}}
                                 : json(nullptr);
  return j;
}

/// Keys absent from `j` keep their defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> kKeys = {"model", "setup",  "beta",   "gamma",       "k_ensemble",
                                              "n_iters", "seed", "lambda", "iota",        "h0",
                                              "alpha0", "mode",  "run_gn", "mollifier",   "full",
                                              "diagnostics", "climatology_seed", "output_dir"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  ExperimentConfig cfg;
  try {
    if (j.contains("model")) cfg.model = parse_model_kind(j.at("model").get<std::string>());
    if (j.contains("setup")) {
      const json& s = j.at("setup");
      cfg.setup = s.is_number_integer() ? std::to_string(s.get<int>()) : s.get<std::string>();
    }
    if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
    if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
    if (j.contains("k_ensemble")) cfg.k_ensemble = j.at("k_ensemble").get<Index>();
    if (j.contains("n_iters")) cfg.n_iters = j.at("n_iters").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
    if (j.contains("iota")) cfg.iota = j.at("iota").get<double>();
    if (j.contains("h0")) cfg.h0 = j.at("h0").get<double>();
    if (j.contains("alpha0")) cfg.alpha0 = j.at("alpha0").get<double>();
    if (j.contains("mode")) {
      const auto m = j.at("mode").get<std::string>();
      if (m == "transform") cfg.mode = UpdateMode::transform;
      else if (m == "stochastic") cfg.mode = UpdateMode::stochastic;
      else throw ConfigError("mode must be transform or stochastic, got '" + m + "'");
    }
    if (j.contains("run_gn")) cfg.run_gn = j.at("run_gn").get<bool>();
    if (j.contains("full")) cfg.full = j.at("full").get<bool>();
    if (j.contains("diagnostics")) cfg.diagnostics = j.at("diagnostics").get<bool>();
    if (j.contains("climatology_seed")) cfg.climatology_seed = j.at("climatology_seed").get<std::uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("mollifier") && !j.at("mollifier").is_null()) {
      const json& m = j.at("mollifier");
      for (const auto& [key, _] : m.items())
        if (key != "radius" && key != "constant") throw ConfigError("unknown mollifier key '" + key + "'");
      Mollifier mol;
      if (m.contains("radius")) mol.radius = m.at("radius").get<double>();
      if (m.contains("constant")) mol.constant = m.at("constant").get<double>();
      cfg.mollifier = mol;
    }
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  validate(cfg);
  return cfg;
}

/// Published Tables 2-4 (full scale). Reference metadata only.
struct PublishedRow {
  const char* label;
  double rel_err;
  double loss;
  double minutes;
};

inline std::vector<PublishedRow> published_reference(ModelKind kind) {
  switch (kind) {
    case ModelKind::l96:
      return {{"1", 0.126, 1.80, 74},   {"2", 0.076, 1.166, 74}, {"3", 0.073, 1.61, 76},  {"4", 0.065, 1.57, 77},
              {"5", 0.057, 1.56, 79},   {"6", 0.065, 1.59, 77},  {"7", 0.068, 1.62, 78},  {"8", 0.073, 1.67, 76},
              {"9", 0.077, 1.71, 74},   {"10", 0.081, 1.73, 73}, {"vanilla", 0.183, 1.84, 73}, {"gn", 0.042, 1.48, 80}};
    case ModelKind::darcy1d:
      return {{"1", 0.112, 1.63, 92},   {"2", 0.058, 1.50, 94},  {"3", 0.053, 1.45, 97},  {"4", 0.047, 1.42, 95},
              {"5", 0.044, 1.40, 98},   {"6", 0.044, 1.37, 97},  {"7", 0.046, 1.39, 94},  {"8", 0.049, 1.42, 96},
              {"9", 0.057, 1.48, 93},   {"10", 0.060, 1.53, 95}, {"vanilla", 0.161, 1.87, 91}, {"gn", 0.038, 1.33, 102}};
    case ModelKind::darcy2d:
      return {{"1", 0.172, 2.01, 281},  {"2", 0.164, 1.89, 278}, {"3", 0.158, 1.84, 274}, {"4", 0.154, 1.81, 276},
              {"5", 0.152, 1.76, 273},  {"6", 0.154, 1.64, 275}, {"7", 0.156, 1.67, 278}, {"8", 0.161, 1.73, 275},
              {"9", 0.164, 1.79, 279},  {"10", 0.167, 1.89, 282}, {"vanilla", 0.208, 2.06, 279}, {"gn", 0.137, 1.66, 307}};
  }
  return {};
}

inline json published_reference_json(ModelKind kind) {
  json out = json::object();
  for (const auto& row : published_reference(kind))
    out[row.label] = {{"rel_err", row.rel_err}, {"loss", row.loss}, {"time_min", row.minutes}};
  return out;
}

/// Everything a run needs except the schedule; shared across the rows of a sweep.
struct ExperimentSetup {
  TestProblem problem;
  TruthAndData data;
  AugmentedProblem augmented;
  Ensemble initial;
};

inline ExperimentSetup prepare(const ExperimentConfig& cfg) {
  validate(cfg);
  const ProblemSize size = cfg.full ? ProblemSize::full() : ProblemSize::desk();
  TestProblem problem = make_test_problem(cfg.model, size, cfg.climatology_seed);
  TruthAndData data = make_truth_and_data(problem, cfg.iota, derive_seed(cfg.seed, 1));
  const Index dy = problem.model->output_dim();
  AugmentedProblem aug(problem.model, data.y, cfg.iota * cfg.iota * Matrix::Identity(dy, dy), problem.prior_cov,
                       cfg.lambda, cfg.mollifier);
  const Index k = cfg.k_ensemble > 0 ? cfg.k_ensemble : problem.default_ensemble;
  Ensemble e0 = initial_ensemble(problem, k, derive_seed(cfg.seed, 2));
  return {std::move(problem), std::move(data), std::move(aug), std::move(e0)};
}

struct ExperimentResult {
  ExperimentConfig config;
  Vector truth;
  Vector initial_mean;
  Vector final_mean;
  std::vector<RunRecord> records;
  std::optional<GnResult> gn;
  int rank_warnings = 0;
  double wall_seconds = 0.0;
  double gn_wall_seconds = 0.0;
};

inline ExperimentResult run_prepared(const ExperimentConfig& cfg, const ExperimentSetup& setup) {
  const Schedule schedule = make_schedule(cfg);
  ExperimentResult out;
  out.config = cfg;
  out.truth = setup.data.truth;
  out.initial_mean = ensemble_mean(setup.initial);
  RunOptions opts;
  opts.mode = cfg.mode;
  opts.seed = derive_seed(cfg.seed, 3);
  opts.diagnostics = cfg.diagnostics;
  opts.truth = setup.data.truth;
  opts.observers.push_back([&](const RunRecord&, const EkiState& st) {
    if (st.rank_warning) ++out.rank_warnings;
  });
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res = [&] {
    try {
      return run(setup.augmented, schedule, setup.initial, cfg.n_iters, opts);
    } catch (const NumericalError& err) {
      throw NumericalError(to_string(cfg.model) + " setup " + cfg.setup + ": " + err.what());
    }
  }();
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.final_mean = res.final_state.moments.mean;
  out.records = std::move(res.records);
  if (cfg.run_gn) {
    const auto g0 = std::chrono::steady_clock::now();
    out.gn = gn_run(setup.augmented, out.initial_mean, cfg.n_iters, setup.data.truth);
    out.gn_wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - g0).count();
  }
  return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_prepared(cfg, prepare(cfg)); }

/// Finite doubles as numbers, anything else as null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Contains no timing so it is byte-stable for a fixed config.
inline json summary_json(const ExperimentResult& r) {
  json s;
  s["config"] = config_to_json(r.config);
  s["d_u"] = r.truth.size();
  s["initial_rel_err"] = number_or_null(relative_error(r.initial_mean, r.truth));
  s["iterations"] = r.records.size();
  s["rank_warnings"] = r.rank_warnings;
  if (!r.records.empty()) {
    const RunRecord& last = r.records.back();
    s["final"] = {{"rel_err", number_or_null(last.rel_err)},
                  {"loss", number_or_null(last.loss)},
                  {"misfit", number_or_null(last.misfit)},
                  {"eig_min_cuu", number_or_null(last.eig_min_cuu)},
                  {"eig_max_cuu", number_or_null(last.eig_max_cuu)}};
  } else {
    s["final"] = nullptr;
  }
  if (r.gn) {
    json g = {{"diverged", r.gn->diverged}, {"iterations", r.gn->records.size()}};
    if (!r.gn->records.empty()) {
      g["rel_err"] = number_or_null(r.gn->records.back().rel_err);
      g["loss"] = number_or_null(r.gn->records.back().loss);
    }
    s["gauss_newton"] = g;
  }
  s["published_reference"] = published_reference_json(r.config.model);
  s["published_reference_scale"] = "full (L96 N=40 K=50; Darcy1D d_u=40 K=50; Darcy2D d_u=150 K=200)";
  return s;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

/// records.csv, summary.json, reconstruction.csv, timing.json and gn_records.csv when GN ran.
inline void write_experiment(const ExperimentResult& r, const std::filesystem::path& dir) {
  ensure_directory(dir);
  emit_records(r.records, (dir / "records.csv").string());
  write_text(dir / "summary.json", summary_json(r).dump(2) + "\n");
  std::string recon = "coordinate,truth,estimate\n";
  for (Index i = 0; i < r.truth.size(); ++i)
    recon += std::to_string(i) + "," + format_double(r.truth[i]) + "," + format_double(r.final_mean[i]) + "\n";
  write_text(dir / "reconstruction.csv", recon);
  json timing = {{"eki_seconds", r.wall_seconds}};
  if (r.gn) {
    timing["gn_seconds"] = r.gn_wall_seconds;
    std::string gn = "n,loss,rel_err\n";
    for (const auto& g : r.gn->records)
      gn += std::to_string(g.n) + "," + format_double(g.loss) + "," + format_double(g.rel_err) + "\n";
    write_text(dir / "gn_records.csv", gn);
  }
  write_text(dir / "timing.json", timing.dump(2) + "\n");
}

struct SweepRow {
  std::uint64_t seed = 0;
  std::string label;  // "1".."10", "vanilla", "gn"
  bool ok = false;
  std::string error;
  double rel_err = kNaN;
  double loss = kNaN;
  double wall_seconds = kNaN;
};

inline const std::vector<std::string>& sweep_labels() {
  static const std::vector<std::string> kLabels = {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "vanilla", "gn"};
  return kLabels;
}

/// Ten setups, VTEKI and GN per seed, all sharing one truth, data set and initial ensemble.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  std::vector<SweepRow> rows;
  for (const std::uint64_t seed : seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    cfg.run_gn = false;
    const ExperimentSetup setup = prepare(cfg);
    for (const auto& label : sweep_labels()) {
      SweepRow row;
      row.seed = seed;
      row.label = label;
      try {
        if (label == "gn") {
          const auto t0 = std::chrono::steady_clock::now();
          const GnResult gn = gn_run(setup.augmented, ensemble_mean(setup.initial), cfg.n_iters, setup.data.truth);
          row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          if (gn.diverged) throw NumericalError("Gauss-Newton diverged");
          if (gn.records.empty()) {
            row.rel_err = relative_error(gn.iterates.front(), setup.data.truth);
            row.loss = setup.augmented.loss(gn.iterates.front());
          } else {
            row.rel_err = gn.records.back().rel_err;
            row.loss = gn.records.back().loss;
          }
        } else {
          cfg.setup = label;
          const ExperimentResult r = run_prepared(cfg, setup);
          row.wall_seconds = r.wall_seconds;
          if (r.records.empty()) {
            row.rel_err = relative_error(r.final_mean, r.truth);
            row.loss = setup.augmented.loss(r.final_mean);
          } else {
            row.rel_err = r.records.back().rel_err;
            row.loss = r.records.back().loss;
          }
        }
        row.ok = std::isfinite(row.rel_err) && std::isfinite(row.loss);
        if (!row.ok) row.error = "non-finite result";
      } catch (const std::exception& err) {
        row.ok = false;
        row.error = err.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

struct SweepAggregate {
  std::string label;
  int runs = 0;
  int failed = 0;
  double rel_err_mean = kNaN;
  double rel_err_std = kNaN;
  double loss_mean = kNaN;
  double loss_std = kNaN;
  double wall_mean = kNaN;
};

/// Mean and sample standard deviation over successful runs, per label.
inline std::vector<SweepAggregate> aggregate(const std::vector<SweepRow>& rows) {
  std::vector<SweepAggregate> out;
  for (const auto& label : sweep_labels()) {
    SweepAggregate a;
    a.label = label;
    std::vector<double> errs;
    std::vector<double> losses;
    std::vector<double> walls;
    for (const auto& r : rows) {
      if (r.label != label) continue;
      ++a.runs;
      if (!r.ok) {
        ++a.failed;
        continue;
      }
      errs.push_back(r.rel_err);
      losses.push_back(r.loss);
      walls.push_back(r.wall_seconds);
    }
    auto mean_std = [](const std::vector<double>& v) -> std::pair<double, double> {
      if (v.empty()) return {kNaN, kNaN};
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      if (v.size() < 2) return {m, kNaN};
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
    };
    std::tie(a.rel_err_mean, a.rel_err_std) = mean_std(errs);
    std::tie(a.loss_mean, a.loss_std) = mean_std(losses);
    a.wall_mean = mean_std(walls).first;
    out.push_back(a);
  }
  return out;
}

inline const SweepAggregate& find_aggregate(const std::vector<SweepAggregate>& aggs, const std::string& label) {
  for (const auto& a : aggs)
    if (a.label == label) return a;
  throw std::out_of_range("no aggregate for label " + label);
}

/// table.csv (one row per run), table_summary.csv (mean / std per setup) and table.json.
inline void write_sweep(const ExperimentConfig& base, const std::vector<SweepRow>& rows,
                        const std::filesystem::path& dir) {
  ensure_directory(dir);
  std::string csv = "seed,setup,status,rel_err,loss,wall_seconds\n";
  for (const auto& r : rows)
    csv += std::to_string(r.seed) + "," + r.label + "," + (r.ok ? "ok" : "failed") + "," + format_double(r.rel_err) +
           "," + format_double(r.loss) + "," + format_double(r.wall_seconds) + "\n";
  write_text(dir / "table.csv", csv);
  std::string summary = "setup,runs,failed,rel_err_mean,rel_err_std,loss_mean,loss_std,wall_seconds_mean\n";
  for (const auto& a : aggregate(rows))
    summary += a.label + "," + std::to_string(a.runs) + "," + std::to_string(a.failed) + "," +
               format_double(a.rel_err_mean) + "," + format_double(a.rel_err_std) + "," + format_double(a.loss_mean) +
               "," + format_double(a.loss_std) + "," + format_double(a.wall_mean) + "\n";
  write_text(dir / "table_summary.csv", summary);

  json j;
  j["config"] = config_to_json(base);
  j["rows"] = json::array();
  for (const auto& r : rows) {
    json row = {{"seed", r.seed},
                {"setup", r.label},
                {"status", r.ok ? "ok" : "failed"},
                {"rel_err", number_or_null(r.rel_err)},
                {"loss", number_or_null(r.loss)},
                {"wall_seconds", number_or_null(r.wall_seconds)}};
    if (!r.ok) row["error"] = r.error;
    j["rows"].push_back(row);
  }
  j["aggregate"] = json::array();
  for (const auto& a : aggregate(rows))
    j["aggregate"].push_back({{"setup", a.label},
                              {"runs", a.runs},
                              {"failed", a.failed},
                              {"rel_err_mean", number_or_null(a.rel_err_mean)},
                              {"rel_err_std", number_or_null(a.rel_err_std)},
                              {"loss_mean", number_or_null(a.loss_mean)},
                              {"loss_std", number_or_null(a.loss_std)},
                              {"wall_seconds_mean", number_or_null(a.wall_mean)}});
  j["published_reference"] = published_reference_json(base.model);
  write_text(dir / "table.json", j.dump(2) + "\n");
}

}  // namespace teki

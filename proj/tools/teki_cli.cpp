// teki: run, sweep and verify Tikhonov EKI experiments.
//
// Exit codes: 0 ok, 1 configuration error, 2 numerical failure, 3 I/O error.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "teki/experiment.hpp"
#include "teki/theory.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kNumerical = 2, kIo = 3 };

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw teki::ConfigError("empty entry in --seeds");
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      throw teki::ConfigError("bad seed '" + item + "'");
    }
    if (used != item.size() || item.front() == '-') throw teki::ConfigError("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw teki::ConfigError("--seeds needs at least one value");
  return seeds;
}

teki::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw teki::IoError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& err) {
    throw teki::ConfigError("config " + path + ": " + err.what());
  }
  return teki::config_from_json(j);
}

struct Overrides {
  std::string config_path;
  std::string model;
  std::string setup;
  std::string mode;
  int iters = -1;
  long long ensemble = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool gn = false;
  bool full = false;
  bool no_diagnostics = false;
  std::string out;
};

teki::ExperimentConfig build_config(const Overrides& o) {
  teki::ExperimentConfig cfg = load_config(o.config_path);
  if (!o.model.empty()) cfg.model = teki::parse_model_kind(o.model);
  if (!o.setup.empty()) cfg.setup = o.setup;
  if (!o.mode.empty()) {
    if (o.mode == "transform") cfg.mode = teki::UpdateMode::transform;
    else if (o.mode == "stochastic") cfg.mode = teki::UpdateMode::stochastic;
    else throw teki::ConfigError("--mode must be transform or stochastic");
  }
  if (o.iters >= 0) cfg.n_iters = o.iters;
  if (o.ensemble >= 0) cfg.k_ensemble = static_cast<teki::Index>(o.ensemble);
  if (o.seed_set) cfg.seed = o.seed;
  if (o.gn) cfg.run_gn = true;
  if (o.full) cfg.full = true;
  if (o.no_diagnostics) cfg.diagnostics = false;
  if (!o.out.empty()) cfg.output_dir = o.out;
  teki::validate(cfg);
  return cfg;
}

int cmd_run(const Overrides& o) {
  const teki::ExperimentConfig cfg = build_config(o);
  const teki::ExperimentResult r = teki::run_experiment(cfg);
  teki::write_experiment(r, cfg.output_dir);
  if (!r.records.empty())
    std::printf("%s setup %s: rel_err %.6g loss %.6g after %d iterations\n", teki::to_string(cfg.model).c_str(),
                cfg.setup.c_str(), r.records.back().rel_err, r.records.back().loss, cfg.n_iters);
  if (r.gn && !r.gn->records.empty())
    std::printf("gauss-newton: rel_err %.6g loss %.6g%s\n", r.gn->records.back().rel_err, r.gn->records.back().loss,
                r.gn->diverged ? " (diverged)" : "");
  return kOk;
}

int cmd_sweep(const Overrides& o, const std::string& seeds) {
  const teki::ExperimentConfig cfg = build_config(o);
  const auto rows = teki::sweep(cfg, parse_seeds(seeds));
  teki::write_sweep(cfg, rows, cfg.output_dir);
  std::printf("%-8s %12s %12s %6s\n", "setup", "rel_err", "loss", "failed");
  for (const auto& a : teki::aggregate(rows))
    std::printf("%-8s %12.6g %12.6g %3d/%d\n", a.label.c_str(), a.rel_err_mean, a.loss_mean, a.failed, a.runs);
  return kOk;
}

int cmd_verify(const std::string& out) {
  const teki::TheoryReport rep = teki::verify_theory();
  teki::ensure_directory(out);
  teki::write_text(std::filesystem::path(out) / "theory_report.json", rep.to_json().dump(2) + "\n");
  for (const auto& c : rep.checks)
    std::printf("%-40s %s  value %.6g (%s %.6g)\n", c.name.c_str(), c.passed ? "PASS" : "FAIL", c.value,
                c.relation.c_str(), c.target);
  return rep.all_passed() ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tikhonov ensemble Kalman inversion experiments"};
  app.require_subcommand(1);

  Overrides run_o;
  auto* run = app.add_subcommand("run", "single experiment: records.csv, summary.json, reconstruction.csv");
  run->add_option("--config", run_o.config_path, "JSON config; flags below override it");
  run->add_option("--model", run_o.model, "l96 | darcy1d | darcy2d");
  run->add_option("--setup", run_o.setup, "1..10 | vanilla | custom");
  run->add_flag("--gn", run_o.gn, "also run Gauss-Newton from the initial mean");
  run->add_option("--iters", run_o.iters, "EKI iterations (default 23)");
  run->add_option("--ensemble", run_o.ensemble, "ensemble size K (default per model)");
  run->add_option("--seed", run_o.seed, "seed for truth, data and ensemble")->each([&](const std::string&) {
    run_o.seed_set = true;
  });
  run->add_option("--mode", run_o.mode, "transform | stochastic");
  run->add_flag("--full", run_o.full, "published problem sizes instead of desk sizes");
  run->add_flag("--no-diagnostics", run_o.no_diagnostics, "skip Jacobian-based record fields");
  run->add_option("--out", run_o.out, "output directory")->required();

  Overrides sweep_o;
  std::string seeds;
  auto* sweep = app.add_subcommand("sweep", "setups 1-10, VTEKI and GN per seed: table.csv, table.json");
  sweep->add_option("--config", sweep_o.config_path, "JSON base config");
  sweep->add_option("--model", sweep_o.model, "l96 | darcy1d | darcy2d");
  sweep->add_option("--seeds", seeds, "comma-separated seeds")->required();
  sweep->add_option("--iters", sweep_o.iters, "EKI / GN iterations (default 23)");
  sweep->add_option("--ensemble", sweep_o.ensemble, "ensemble size K");
  sweep->add_flag("--full", sweep_o.full, "published problem sizes");
  sweep->add_option("--out", sweep_o.out, "output directory")->required();

  std::string verify_out;
  auto* verify = app.add_subcommand("verify", "theory checks on whitened toys: theory_report.json");
  verify->add_option("--out", verify_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(run_o);
    if (*sweep) {
      sweep_o.no_diagnostics = true;
      return cmd_sweep(sweep_o, seeds);
    }
    if (*verify) return cmd_verify(verify_out);
  } catch (const teki::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const teki::IoError& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kIo;
  } catch (const teki::NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const std::exception& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kNumerical;
  }
  return kOk;
}

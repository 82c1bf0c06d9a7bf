// lcsim: run, sweep, gen-trace, validate-config.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lcsim/errors.hpp"
#include "lcsim/report.hpp"
#include "lcsim/workload.hpp"

namespace fs = std::filesystem;
using namespace lcsim;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool exact_pipeline = false;
  bool plot = false;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("lcsim");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("MEDHA_SIM_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honor real names.
    if (level != spdlog::level::off || std::string(env) == "off") {
      spdlog::set_level(level);
    } else {
      spdlog::warn("ignoring MEDHA_SIM_LOG={}", env);
    }
  }
}

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.trace_spec.seed = *o.seed;
  if (o.exact_pipeline) cfg.sim.exact_pipeline = true;
  if (!o.out.empty()) cfg.out_dir = o.out;
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

int cmd_validate(const Options& o) {
  const ExperimentConfig cfg = load(o);
  validate_config(cfg);
  std::cout << "config ok: " << cfg.sim.model.name << " on " << cfg.sim.par.devices() << "x "
            << cfg.sim.hw.name << " (tp " << cfg.sim.par.tp << ", spp " << cfg.sim.par.spp
            << ", kvp " << cfg.sim.par.kvp << "), policy " << to_string(cfg.sim.scheduler.policy);
  if (cfg.sweep.cells() > 1) std::cout << ", " << cfg.sweep.cells() << " sweep cells";
  std::cout << "\n";
  return 0;
}

int cmd_run(const Options& o) {
  const ExperimentConfig cfg = load(o);
  validate_config(cfg);
  TraceLoadStats stats;
  Trace trace;
  if (cfg.trace_path && cfg.single_context == 0) {
    trace = load_trace(*cfg.trace_path, &stats);
    if (stats.reordered) spdlog::warn("{} trace lines were out of arrival order; sorted", stats.reordered);
  } else {
    trace = materialize_trace(cfg);
  }
  spdlog::info("simulating {} requests", trace.size());
  const SimMetrics m = run_experiment(cfg, trace);
  spdlog::info("{} steps, {} s simulated", m.steps, m.elapsed);

  fs::create_directories(cfg.out_dir);
  open_out(cfg.out_dir / "metrics.json") << metrics_json(m).dump(2) << '\n';
  {
    auto csv = open_out(cfg.out_dir / "requests.csv");
    write_request_csv(m, csv);
  }
  const std::string table = summary_table(summarize(m));
  open_out(cfg.out_dir / "summary.txt") << table;
  std::cout << table;

  if (o.plot) {
    std::vector<double> tpot;
    for (const auto& r : m.requests) tpot.insert(tpot.end(), r.tpot.begin(), r.tpot.end());
    const auto ttft = censored_ttfts(m);
    {
      auto f = open_out(cfg.out_dir / "cdf_ttft.csv");
      write_cdf_csv(ttft, f);
    }
    {
      auto f = open_out(cfg.out_dir / "cdf_tpot.csv");
      write_cdf_csv(tpot, f);
    }
    open_out(cfg.out_dir / "ttft_cdf.svg") << cdf_svg(ttft, "TTFT CDF", "seconds");
    open_out(cfg.out_dir / "tpot_cdf.svg") << cdf_svg(tpot, "TPOT CDF", "seconds");
  }
  spdlog::info("wrote reports to {}", cfg.out_dir.string());
  return 0;
}

int cmd_sweep(const Options& o) {
  const ExperimentConfig cfg = load(o);
  validate_config(cfg);
  spdlog::info("sweeping {} cells with {} jobs", cfg.sweep.cells(), o.jobs);
  const auto rows = run_sweep(cfg, o.jobs);
  fs::create_directories(cfg.out_dir);
  {
    auto f = open_out(cfg.out_dir / "sweep.csv");
    write_sweep_csv(rows, f);
  }
  write_sweep_csv(rows, std::cout);
  for (const auto& r : rows) {
    if (!r.feasible) spdlog::info("infeasible cell (spp {}, kvp {}): {}", r.p_spp, r.p_kvp, r.error);
  }
  return 0;
}

int cmd_gen_trace(const Options& o) {
  const ExperimentConfig cfg = load(o);
  cfg.trace_spec.validate();
  const Trace trace = generate_trace(cfg.trace_spec);
  if (o.out.empty()) {
    write_trace(trace, std::cout);
  } else {
    fs::create_directories(o.out);
    write_trace(trace, fs::path(o.out) / "trace.jsonl");
    spdlog::info("wrote {} requests to {}", trace.size(), (fs::path(o.out) / "trace.jsonl").string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Long-context LLM serving simulator"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option_function<std::uint64_t>("--seed", [&o](const std::uint64_t& s) { o.seed = s; },
                                            "trace seed override");
  };
  auto* run = app.add_subcommand("run", "simulate one experiment");
  common(run);
  run->add_flag("--exact-pipeline", o.exact_pipeline, "track every pipeline stage explicitly");
  run->add_flag("--plot", o.plot, "write CDF data and SVG charts");
  auto* sweep = app.add_subcommand("sweep", "run the Cartesian product of sweep axes");
  common(sweep);
  sweep->add_option("--jobs", o.jobs, "concurrent cells")->check(CLI::PositiveNumber);
  sweep->add_flag("--exact-pipeline", o.exact_pipeline, "track every pipeline stage explicitly");
  auto* gen = app.add_subcommand("gen-trace", "write a generated trace as JSONL");
  common(gen);
  auto* val = app.add_subcommand("validate-config", "check a config without running it");
  common(val);

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (gen->parsed()) return cmd_gen_trace(o);
    if (val->parsed()) return cmd_validate(o);
  } catch (const InfeasibleConfig& e) {
    spdlog::error("infeasible: {}", e.what());
    return 3;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return 2;
  } catch (const ParseError& e) {
    spdlog::error("parse: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

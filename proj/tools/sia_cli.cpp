// Command-line front end: run, replay, report, instances.
//
// Exit codes: 0 success, 2 configuration error, 3 run error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sia/orchestrator.hpp"
#include "sia/store.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sia: deterministic harness/weight self-improvement loop"};
  app.require_subcommand(1);

  std::string task;
  std::string mode = "sia-wh";
  std::optional<std::uint64_t> seed;
  std::optional<int> generations;
  std::string config_path;
  std::string out_dir = ".";
  auto* run = app.add_subcommand("run", "run the loop and write events.jsonl, report.csv, policy.json");
  run->add_option("--task", task, "classify | kernel | denoise")->required();
  run->add_option("--mode", mode, "baseline | sia-h | sia-wh");
  run->add_option("--seed", seed, "overrides loop.seed");
  run->add_option("--generations", generations, "overrides loop.max_generations");
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--out", out_dir, "output directory");

  std::string log_path;
  auto* rep = app.add_subcommand("replay", "recompute the report from an event log and print it as CSV");
  rep->add_option("--log", log_path, "event log")->required();

  std::string csv_path;
  auto* report = app.add_subcommand("report", "write the report CSV of an event log");
  report->add_option("--log", log_path, "event log")->required();
  report->add_option("--csv", csv_path, "output CSV file")->required();

  std::uint64_t env_seed = 42;
  auto* inst = app.add_subcommand("instances", "dump an environment's instance sets as text lines");
  inst->add_option("--task", task, "classify | kernel | denoise")->required();
  inst->add_option("--seed", env_seed, "environment seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  sia::LoopConfig config;
  sia::EnvKind kind{};
  sia::RunMode run_mode{};
  try {
    if (*run) {
      if (!config_path.empty()) config = sia::load_config(config_path);
      if (seed) config.seed = *seed;
      if (generations) config.max_generations = *generations;
      config.validate();
      kind = sia::parse_env_kind(task);
      run_mode = sia::parse_run_mode(mode);
    } else if (*inst) {
      kind = sia::parse_env_kind(task);
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*run) {
      const sia::RunResult result = sia::run_loop(config, kind, run_mode);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      result.log.write(dir / "events.jsonl");
      write_file(dir / "report.csv", sia::emit_report_csv(result.report));
      write_file(dir / "policy.json", sia::serialize_policy(result.final_policy));
      const auto& r = result.report;
      std::cout << r.task << ' ' << sia::to_string(r.mode) << " seed=" << config.seed << " initial=" << r.initial
                << " sia_h_best=" << r.sia_h_best << " sia_wh_best=" << r.sia_wh_best << '\n';
    } else if (*rep) {
      std::cout << sia::emit_report_csv(sia::replay(sia::read_event_log(log_path)));
    } else if (*report) {
      write_file(csv_path, sia::emit_report_csv(sia::replay(sia::read_event_log(log_path))));
    } else if (*inst) {
      sia::make_environment(kind, env_seed)->dump_instances(std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "run error: " << e.what() << '\n';
    return kExitRun;
  }
  return kExitOk;
}

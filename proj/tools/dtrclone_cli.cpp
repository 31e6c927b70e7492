#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "dtrclone/config.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/pipeline.hpp"
#include "dtrclone/simulator.hpp"
#include "dtrclone/synth_cohort.hpp"

namespace fs = std::filesystem;
using namespace dtrclone;

namespace {

struct StageCommand {
  std::string config_path;
  std::string output;
};

int run_stage(const StageCommand& cmd, Stage until) {
  RunConfig config = load_run_config(cmd.config_path);
  if (!cmd.output.empty()) config.output_dir = cmd.output;
  PipelineResult result = run_pipeline(config, until, &std::cerr);
  if (result.exit_code != 0) {
    std::cerr << "error: " << result.message << "\n";
    return result.exit_code;
  }
  std::cerr << "wrote " << result.artifacts.size() << " files to " << config.output_dir << "\n";
  return 0;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  body(out);
}

struct SimulateCommand {
  std::string config_path;
  std::string scenario;
  int replications = 0;
  std::string output = "simulation-out";
};

int run_simulate(const SimulateCommand& cmd, unsigned threads) {
  SimConfig config;
  if (!cmd.config_path.empty()) {
    if (!cmd.scenario.empty()) throw ConfigError("--scenario and --config are mutually exclusive");
    config = load_sim_config(cmd.config_path);
  } else {
    config = scenario_config(parse_bias_level(cmd.scenario.empty() ? "none" : cmd.scenario));
  }
  if (cmd.replications > 0) config.replications = cmd.replications;
  config.validate();
  fs::create_directories(cmd.output);
  SimStudy study = run_study(config, threads);
  fs::path dir = cmd.output;
  write_file(dir / "simulation_config.json", [&](std::ostream& s) { s << dump_sim_config(config); });
  write_file(dir / "calibration.csv", [&](std::ostream& s) { write_calibration(study.calibration, config, s); });
  write_file(dir / "estimates.csv", [&](std::ostream& s) { write_estimates(study.estimates, s); });
  write_file(dir / "summary.csv", [&](std::ostream& s) { write_summary(study.summary, s); });
  write_file(dir / "comparison_table.csv", [&](std::ostream& s) { write_comparison_table(study.summary, config, s); });
  write_comparison_table(study.summary, config, std::cout);
  return 0;
}

struct SynthCommand {
  std::string config_path;
  int n = 0;
  long long seed = -1;
  std::string output = "synth-cohort";
};

int run_synth(const SynthCommand& cmd) {
  SynthCohortConfig sc;
  if (!cmd.config_path.empty()) {
    std::ifstream in(cmd.config_path);
    if (!in) throw ConfigError("cannot read '" + cmd.config_path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    sc = parse_synth_config(text);
  }
  if (cmd.n > 0) sc.n = cmd.n;
  if (cmd.seed >= 0) sc.seed = static_cast<std::uint64_t>(cmd.seed);
  Cohort cohort = synth_cohort(sc);
  fs::path dir = cmd.output;
  fs::create_directories(dir);
  {
    std::ofstream visits(dir / "visits.csv", std::ios::binary | std::ios::trunc);
    std::ofstream outcomes(dir / "outcomes.csv", std::ios::binary | std::ios::trunc);
    if (!visits || !outcomes) throw ConfigError("cannot write cohort files in '" + dir.string() + "'");
    emit_cohort(cohort, visits, &outcomes);
  }
  RunConfig run = default_run_config();
  run.input.visits = (dir / "visits.csv").string();
  run.input.outcomes = (dir / "outcomes.csv").string();
  run.output_dir = (dir / "results").string();
  run.seed = sc.seed;
  write_file(dir / "config.json", [&](std::ostream& s) { s << dump_run_config(run); });
  write_file(dir / "synth_config.json", [&](std::ostream& s) { s << dump_synth_config(sc); });
  std::cerr << "wrote " << cohort.subjects.size() << " subjects to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloned IPW survival analysis of dynamic treatment regimens"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--threads", threads, "Upper bound on worker threads")->check(CLI::PositiveNumber);

  std::vector<std::pair<CLI::App*, Stage>> stage_apps;
  StageCommand stage_cmd;
  auto add_stage = [&](const char* name, Stage stage, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", stage_cmd.config_path, "Run configuration (JSON)")->required();
    sub->add_option("-o,--output", stage_cmd.output, "Override the output directory");
    stage_apps.emplace_back(sub, stage);
  };
  add_stage("ingest", Stage::ingest, "Validate input files and write canonical cohort and summaries");
  add_stage("clone", Stage::clone, "Expand the cohort into the cloned, censored table");
  add_stage("weights", Stage::weights, "Fit weight models and write the weight audit");
  add_stage("logrank", Stage::logrank, "Run the weighted log-rank comparisons");
  add_stage("msm", Stage::msm, "Fit the marginal structural models");
  add_stage("report", Stage::report, "Run every stage and write formatted tables and plot data");
  add_stage("run", Stage::report, "Alias of report");

  std::string print_kind = "run";
  std::string print_scenario;
  auto* print = app.add_subcommand("print-config", "Print a configuration with all defaults");
  print->add_option("kind", print_kind, "run, simulation or synth")
      ->check(CLI::IsMember({"run", "simulation", "synth"}));
  print->add_option("--scenario", print_scenario, "Bias scenario for simulation configs")
      ->check(CLI::IsMember({"none", "moderate", "severe"}));

  SimulateCommand sim_cmd;
  auto* simulate = app.add_subcommand("simulate", "Run the simulation study");
  simulate->add_option("-c,--config", sim_cmd.config_path, "Simulation configuration (JSON)");
  simulate->add_option("--scenario", sim_cmd.scenario, "Desk-scale scenario shorthand")
      ->check(CLI::IsMember({"none", "moderate", "severe"}));
  simulate->add_option("--replications", sim_cmd.replications, "Override the number of replications");
  simulate->add_option("-o,--output", sim_cmd.output, "Output directory");

  SynthCommand synth_cmd;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dialysis-like cohort and a matching run config");
  synth->add_option("-c,--config", synth_cmd.config_path, "Generator configuration (JSON)");
  synth->add_option("-n,--subjects", synth_cmd.n, "Number of subjects");
  synth->add_option("--seed", synth_cmd.seed, "Generator seed");
  synth->add_option("-o,--output", synth_cmd.output, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    for (const auto& [sub, stage] : stage_apps) {
      if (sub->parsed()) return run_stage(stage_cmd, stage);
    }
    if (print->parsed()) {
      if (print_kind == "run") {
        std::cout << dump_run_config(default_run_config());
      } else if (print_kind == "simulation") {
        SimConfig c = scenario_config(parse_bias_level(print_scenario.empty() ? "none" : print_scenario));
        std::cout << dump_sim_config(c);
      } else {
        std::cout << dump_synth_config(SynthCohortConfig{});
      }
      return 0;
    }
    if (simulate->parsed()) return run_simulate(sim_cmd, threads);
    if (synth->parsed()) return run_synth(synth_cmd);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  }
  return 0;
}

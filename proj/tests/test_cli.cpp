#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dtrclone/config.hpp"
#include "dtrclone/csv.hpp"

using namespace dtrclone;
namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("dtrclone_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI inside the scratch directory and returns its exit code.
int cli(const std::string& args, const std::string& stdout_file = "") {
  std::string cmd = "cd '" + scratch().string() + "' && '" DTRCLONE_CLI_PATH "' " + args;
  cmd += stdout_file.empty() ? " >/dev/null" : " >'" + stdout_file + "'";
  cmd += " 2>>cli_stderr.txt";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

// A small synthetic cohort analysed twice into separate directories.
struct Runs {
  int synth_exit = -1, first_exit = -1, second_exit = -1;
  fs::path first, second, config;
};

const Runs& runs() {
  static const Runs r = [] {
    Runs out;
    out.synth_exit = cli("synth -n 2000 --seed 3 -o cohort");
    out.config = scratch() / "cohort" / "config.json";
    out.first_exit = cli("run -c cohort/config.json -o run1");
    out.second_exit = cli("--threads 1 run -c cohort/config.json -o run2");
    out.first = scratch() / "run1";
    out.second = scratch() / "run2";
    return out;
  }();
  return r;
}

std::vector<std::string> column(const csv::Table& t, const std::string& name) {
  auto j = t.column(name);
  REQUIRE(j != csv::Table::npos);
  std::vector<std::string> out;
  for (const auto& row : t.rows) out.push_back(row.at(j));
  return out;
}

std::string chomp(std::string s) {
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

double num(const std::string& s) {
  double v = 0;
  REQUIRE(csv::parse_double(s, v));
  return v;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synthetic cohort runs end to end with every artifact") {
    const auto& r = runs();
    REQUIRE(r.synth_exit == 0);
    REQUIRE(r.first_exit == 0);
    for (const char* name :
         {"manifest.json", "clone_table.csv", "weight_audit.csv", "weight_summary.csv", "positivity.csv",
          "logrank.csv", "cohort_summary.csv", "dose_change_profile.csv", "plot_dose_change.csv",
          "rejected_rows.csv", "warnings.csv", "msm_factor_hr.csv", "msm_factor_table.csv",
          "msm_factor_logtime_table.csv", "msm_linear_logtime_table.csv", "plot_msm_factor_logtime.csv",
          "plot_msm_linear_logtime.csv", "nelson_0_2.csv"}) {
      CHECK_MESSAGE(fs::exists(r.first / name), name);
    }
    CHECK_FALSE(fs::exists(r.first / "FAILED"));
    std::string manifest = slurp(r.first / "manifest.json");
    CHECK(manifest.find("\"failed_stage\": null") != std::string::npos);
    CHECK(manifest.find("config_sha256") != std::string::npos);
  }

  TEST_CASE("reruns are byte-identical, whatever the directory or thread count") {
    const auto& r = runs();
    REQUIRE(r.second_exit == 0);
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(r.first)) {
      auto other = r.second / entry.path().filename();
      REQUIRE(fs::exists(other));
      CHECK_MESSAGE(slurp(entry.path()) == slurp(other), entry.path().filename().string());
      ++files;
    }
    CHECK(files >= 30);
  }

  TEST_CASE("every output table declares its columns") {
    const auto& r = runs();
    for (const auto& entry : fs::directory_iterator(r.first)) {
      if (entry.path().extension() != ".csv") continue;
      std::ifstream in(entry.path());
      auto t = csv::read(in);
      std::string declared;
      for (const auto& c : t.comments) {
        if (c.rfind("columns: ", 0) == 0) declared = c.substr(9);
      }
      std::string header;
      for (std::size_t i = 0; i < t.header.size(); ++i) header += (i ? "," : "") + t.header[i];
      INFO(entry.path().filename().string());
      CHECK(!declared.empty());
      CHECK(declared == header);
    }
  }

  TEST_CASE("plot data carries the reported values") {
    const auto& r = runs();
    for (const std::string model : {"factor_logtime", "linear_logtime", "factor"}) {
      auto plot = csv::read_file((r.first / ("plot_msm_" + model + ".csv")).string());
      auto rep = csv::read_file((r.first / ("msm_" + model + "_hr.csv")).string());
      auto table = csv::read_file((r.first / ("msm_" + model + "_table.csv")).string());
      REQUIRE(plot.rows.size() == rep.rows.size());
      REQUIRE(table.rows.size() == rep.rows.size());
      auto value = column(plot, "value"), lo = column(plot, "ci_low"), hi = column(plot, "ci_high");
      auto log_hr = column(rep, "log_hr"), rlo = column(rep, "ci_low"), rhi = column(rep, "ci_high");
      auto hr = column(rep, "hr"), ref = column(rep, "reference");
      auto shown = column(table, "Hazard ratio");
      for (std::size_t i = 0; i < value.size(); ++i) {
        CHECK(value[i] == log_hr[i]);
        CHECK(std::fabs(num(lo[i]) - std::log(num(rlo[i]))) < 1e-12);
        CHECK(std::fabs(num(hi[i]) - std::log(num(rhi[i]))) < 1e-12);
        CHECK(shown[i] == (ref[i] == "1" ? "Reference" : csv::format_fixed(num(hr[i]), 3)));
      }
    }
    auto plot = csv::read_file((r.first / "plot_dose_change.csv").string());
    auto profile = csv::read_file((r.first / "dose_change_profile.csv").string());
    REQUIRE(plot.rows.size() == profile.rows.size());
    CHECK(column(plot, "x") == column(profile, "x"));
    CHECK(column(plot, "series") == column(profile, "series"));
    CHECK(column(plot, "value") == column(profile, "value"));
  }

  TEST_CASE("report tables have the published column structure") {
    const auto& r = runs();
    auto factor = csv::read_file((r.first / "msm_factor_logtime_table.csv").string());
    CHECK(factor.header == std::vector<std::string>{"Regimen comparison", "Hazard ratio", "95% CI"});
    CHECK(factor.rows.size() == 10);
    auto by_month = csv::read_file((r.first / "msm_linear_logtime_table.csv").string());
    CHECK(by_month.header == std::vector<std::string>{"Month", "Hazard ratio", "95% CI"});
    CHECK(by_month.rows.size() == 10);
    auto plot = csv::read_file((r.first / "plot_msm_factor_logtime.csv").string());
    CHECK(plot.header == std::vector<std::string>{"x", "series", "value", "ci_low", "ci_high"});
  }

  TEST_CASE("printed defaults parse back to the same text") {
    REQUIRE(cli("print-config run", (scratch() / "run.json").string()) == 0);
    std::string run = slurp(scratch() / "run.json");
    CHECK(chomp(dump_run_config(parse_run_config(run))) == chomp(run));
    CHECK(chomp(dump_run_config(default_run_config())) == chomp(run));

    REQUIRE(cli("print-config simulation --scenario severe", (scratch() / "sim.json").string()) == 0);
    std::string sim = slurp(scratch() / "sim.json");
    auto parsed = parse_sim_config(sim);
    CHECK(parsed.bias_level == BiasLevel::severe);
    CHECK(chomp(dump_sim_config(parsed)) == chomp(sim));

    REQUIRE(cli("print-config synth", (scratch() / "synth.json").string()) == 0);
    std::string synth = slurp(scratch() / "synth.json");
    CHECK(chomp(dump_synth_config(parse_synth_config(synth))) == chomp(synth));
  }

  TEST_CASE("unknown regimen id is a configuration error before any work") {
    REQUIRE(runs().synth_exit == 0);
    auto config = load_run_config(runs().config.string());
    config.logrank.pairs.emplace_back(42, 2);
    spit(scratch() / "bad_regimen.json", dump_run_config(config));
    CHECK(cli("run -c bad_regimen.json -o bad_regimen_out") == 2);
    CHECK_FALSE(fs::exists(scratch() / "bad_regimen_out" / "clone_table.csv"));

    spit(scratch() / "unknown_key.json", "{\"start_tt\": 3}");
    CHECK(cli("run -c unknown_key.json -o unknown_key_out") == 2);
    CHECK(cli("run -c does_not_exist.json") == 2);
  }

  TEST_CASE("malformed input is a data error") {
    REQUIRE(runs().synth_exit == 0);
    fs::create_directories(scratch() / "dup");
    std::string visits = slurp(scratch() / "cohort" / "visits.csv");
    // repeat the first data row
    std::istringstream lines(visits);
    std::string line;
    int seen = 0;
    while (std::getline(lines, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (++seen == 2) break;
    }
    visits += line + "\n";
    spit(scratch() / "dup" / "visits.csv", visits);
    fs::copy_file(scratch() / "cohort" / "outcomes.csv", scratch() / "dup" / "outcomes.csv",
                  fs::copy_options::overwrite_existing);
    auto config = load_run_config(runs().config.string());
    config.input.visits = "dup/visits.csv";
    config.input.outcomes = "dup/outcomes.csv";
    spit(scratch() / "dup.json", dump_run_config(config));
    CHECK(cli("ingest -c dup.json -o dup_out") == 3);
  }

  TEST_CASE("a numerical failure keeps partial artifacts and marks the run") {
    REQUIRE(cli("synth -n 600 --seed 3 -o tiny") == 0);
    CHECK(cli("run -c tiny/config.json -o tiny_out") == 4);
    auto dir = scratch() / "tiny_out";
    CHECK(fs::exists(dir / "FAILED"));
    CHECK(fs::exists(dir / "clone_table.csv"));
    std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"failed_stage\": \"weights\"") != std::string::npos);
  }

  TEST_CASE("staged subcommands write their own artifacts") {
    REQUIRE(runs().synth_exit == 0);
    CHECK(cli("clone -c cohort/config.json -o staged") == 0);
    CHECK(fs::exists(scratch() / "staged" / "clone_table.csv"));
    CHECK(cli("logrank -c cohort/config.json -o staged") == 0);
    CHECK(fs::exists(scratch() / "staged" / "logrank.csv"));
    CHECK(slurp(scratch() / "staged" / "logrank.csv") == slurp(runs().first / "logrank.csv"));
  }

  TEST_CASE("simulate writes estimates and a summary") {
    spit(scratch() / "sim_small.json", [] {
      auto c = scenario_config(BiasLevel::moderate);
      c.n_k = 150;
      c.replications = 3;
      return dump_sim_config(c);
    }());
    REQUIRE(cli("simulate -c sim_small.json -o sim_out") == 0);
    std::size_t tables = 0;
    for (const auto& entry : fs::directory_iterator(scratch() / "sim_out")) {
      if (entry.path().extension() != ".csv") continue;
      ++tables;
      std::ifstream in(entry.path());
      auto t = csv::read(in);
      bool declared = false;
      for (const auto& c : t.comments) declared |= c.rfind("columns: ", 0) == 0;
      CHECK_MESSAGE(declared, entry.path().filename().string());
    }
    CHECK(tables >= 2);
    spit(scratch() / "sim_bad.json", "{\"K\": 6, \"n_k\": 0}");
    CHECK(cli("simulate -c sim_bad.json -o sim_bad_out") == 2);
  }
}

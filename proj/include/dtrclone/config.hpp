#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dtrclone/cohort.hpp"
#include "dtrclone/msm.hpp"
#include "dtrclone/regimen.hpp"
#include "dtrclone/simulator.hpp"
#include "dtrclone/synth_cohort.hpp"
#include "dtrclone/weights.hpp"

namespace dtrclone {

struct InputConfig {
  std::string visits;
  std::string outcomes;  // optional
  char delimiter = ',';
  CohortSchema schema;
};

struct WeightConfig {
  // Processes whose weights are multiplied into w_total. Empty disables
  // weighting altogether.
  std::vector<CensoringProcess> processes{CensoringProcess::adherence, CensoringProcess::admin,
                                          CensoringProcess::ltfu};
  WeightModelSpec adherence;
  WeightModelSpec censoring;  // shared by admin and ltfu
};

struct LogRankConfig {
  std::vector<std::pair<int, int>> pairs;
  bool weighted = true;
};

struct MsmRun {
  MsmSpec spec;
  std::vector<int> months;  // report months for time-interaction forms
  bool weighted = true;
};

struct ReportConfig {
  double dose_change_threshold = 0.25;
  std::vector<double> marker_edges;
  std::string summary_split = "sex";
};

struct RunConfig {
  InputConfig input;
  int start_t = 3;
  std::optional<int> horizon;
  TraceOptions trace;
  RegimenGrid grid;
  WeightConfig weights;
  LogRankConfig logrank;
  std::vector<MsmRun> msm;
  ReportConfig report;
  std::string output_dir = "dtrclone-out";
  std::uint64_t seed = 0;

  // Checks cross references (regimen ids, weighted analyses without weights)
  // and throws ConfigError. Does not touch the file system.
  void validate() const;
};

// Analysis defaults: G(0.25, x-3, x+3), x = 31..40, against G(0.25,30,36),
// weight models with the full covariate set, four MSM forms.
RunConfig default_run_config();

// Strict parsing: unknown keys, wrong types and bad references throw
// ConfigError. Missing keys keep their defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
// Canonical text, with every default spelled out.
std::string dump_run_config(const RunConfig& config);

SimConfig parse_sim_config(const std::string& json_text);
SimConfig load_sim_config(const std::string& path);
std::string dump_sim_config(const SimConfig& config);

SynthCohortConfig parse_synth_config(const std::string& json_text);
std::string dump_synth_config(const SynthCohortConfig& config);

}  // namespace dtrclone

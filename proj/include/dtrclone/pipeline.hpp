#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtrclone/cohort.hpp"
#include "dtrclone/config.hpp"
#include "dtrclone/msm.hpp"

namespace dtrclone {

inline constexpr std::string_view kVersion = "0.3.0";

enum class Stage { ingest, clone, weights, logrank, msm, report };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct PipelineResult {
  int exit_code = 0;
  std::optional<Stage> completed;  // last stage that finished
  std::optional<Stage> failed;
  std::string message;
  std::vector<std::string> artifacts;  // file names relative to the output directory
  std::vector<std::string> warnings;
};

// Runs ingest -> clone -> weights -> logrank -> msm -> report, stopping after
// `until`. Every table is written into config.output_dir together with
// manifest.json. A stage failure leaves the artifacts written so far, adds a
// FAILED marker naming the stage, and maps the error to its exit code. An
// unusable output directory is reported as a configuration error before any
// computation. Progress lines go to `log` when given.
PipelineResult run_pipeline(const RunConfig& config, Stage until = Stage::report, std::ostream* log = nullptr);

// Dose-change rows (bin midpoint, category, proportion with a Wilson 95%
// interval) and one block of hazard ratio rows per report.
void write_dose_change_plot(const DoseChangeProfile& profile, std::ostream& out, char delim = ',');
std::vector<std::string> emit_plot_data(const DoseChangeProfile* profile,
                                        const std::vector<HazardRatioReport>& reports,
                                        const std::filesystem::path& dir);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dtrclone

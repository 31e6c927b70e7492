#include "dtrclone/pipeline.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/logrank.hpp"
#include "dtrclone/regimen.hpp"
#include "dtrclone/weights.hpp"

namespace dtrclone {

namespace fs = std::filesystem;

namespace {

constexpr std::array<Stage, 6> kStages{Stage::ingest, Stage::clone, Stage::weights,
                                       Stage::logrank, Stage::msm, Stage::report};

class ArtifactWriter {
 public:
  ArtifactWriter(fs::path dir, std::vector<std::string>& names) : dir_(std::move(dir)), names_(names) {}

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + (dir_ / name).string() + "'");
    body(out);
    out.flush();
    if (!out) throw ConfigError("write failed for '" + (dir_ / name).string() + "'");
    for (const auto& n : names_) {
      if (n == name) return;
    }
    names_.push_back(name);
  }

 private:
  fs::path dir_;
  std::vector<std::string>& names_;
};

std::optional<std::pair<double, double>> combined_truncation(const WeightConfig& w) {
  return w.adherence.truncation ? w.adherence.truncation : w.censoring.truncation;
}

void prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir.string() + "'");
  fs::path probe = dir / ".write-test";
  {
    std::ofstream out(probe);
    if (!out) throw ConfigError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
  fs::remove(dir / "FAILED", ec);
}

std::string file_stem(std::string name) {
  for (char& c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return name;
}

void write_logrank_table(const std::vector<std::pair<std::pair<int, int>, LogRankResult>>& results,
                         const RegimenGrid& grid, std::ostream& out) {
  csv::Writer w(out);
  w.schema({"regimen_1", "regimen_2", "label_1", "label_2", "n", "tau", "wstar", "sigma2_hat", "z", "p_value",
            "degenerate"});
  for (const auto& [pair, r] : results) {
    w.row({std::to_string(pair.first), std::to_string(pair.second), grid.by_id(pair.first).label,
           grid.by_id(pair.second).label, std::to_string(r.n), std::to_string(r.tau), csv::format_double(r.wstar),
           csv::format_double(r.sigma2_hat), csv::format_double(r.z), csv::format_double(r.p_value),
           r.degenerate ? "1" : "0"});
  }
}

void write_weight_summary(const CombinedWeights& combined, std::ostream& out) {
  csv::Writer w(out);
  w.schema({"stage", "n", "mean", "sd", "min", "p01", "p25", "median", "p75", "p99", "max"});
  auto row = [&](const char* name, const WeightSummary& s) {
    w.row({name, std::to_string(s.n), csv::format_double(s.mean), csv::format_double(s.sd),
           csv::format_double(s.min), csv::format_double(s.p01), csv::format_double(s.p25),
           csv::format_double(s.median), csv::format_double(s.p75), csv::format_double(s.p99),
           csv::format_double(s.max)});
  };
  row("before_truncation", combined.before);
  row("after_truncation", combined.after);
}

void write_rejected(const std::vector<RowDiagnostic>& rejected, std::ostream& out) {
  csv::Writer w(out);
  w.schema({"line", "message"});
  for (const auto& r : rejected) w.row({std::to_string(r.line), r.message});
}

void write_warnings(const std::vector<std::string>& warnings, std::ostream& out) {
  csv::Writer w(out);
  w.schema({"warning"});
  for (const auto& s : warnings) w.row({s});
}

// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson(double p, std::size_t n) {
  const double z = 1.959963984540054;
  double nn = static_cast<double>(n);
  double denom = 1 + z * z / nn;
  double centre = (p + z * z / (2 * nn)) / denom;
  double half = z * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

void write_manifest(const fs::path& dir, const RunConfig& config, const PipelineResult& result) {
  using nlohmann::json;
  json inputs = json::array();
  for (const auto& path : {config.input.visits, config.input.outcomes}) {
    if (path.empty()) continue;
    std::error_code ec;
    if (fs::is_regular_file(path, ec))
      inputs.push_back({{"path", path}, {"sha256", sha256_file(path)}});
    else
      inputs.push_back({{"path", path}, {"sha256", nullptr}});
  }
  json outputs = json::array();
  for (const auto& name : result.artifacts) {
    fs::path p = dir / name;
    outputs.push_back({{"file", name}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
  }
  // The output location is not an analysis choice; leave it out of the hash.
  RunConfig hashed = config;
  hashed.output_dir = "-";
  json m{{"tool", "dtrclone"},
         {"version", std::string(kVersion)},
         {"status", result.failed ? "failed" : "ok"},
         {"completed_stage", result.completed ? json(to_string(*result.completed)) : json(nullptr)},
         {"failed_stage", result.failed ? json(to_string(*result.failed)) : json(nullptr)},
         {"config_sha256", sha256_hex(dump_run_config(hashed))},
         {"seed", config.seed},
         {"inputs", inputs},
         {"outputs", outputs}};
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  out << m.dump(2) << "\n";
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::ingest: return "ingest";
    case Stage::clone: return "clone";
    case Stage::weights: return "weights";
    case Stage::logrank: return "logrank";
    case Stage::msm: return "msm";
    case Stage::report: return "report";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  for (Stage s : kStages) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown stage '" + text + "'");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

void write_dose_change_plot(const DoseChangeProfile& profile, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.schema({"x", "series", "value", "ci_low", "ci_high"});
  for (const auto& bin : profile.bins) {
    auto x = csv::format_double(0.5 * (bin.lo + bin.hi));
    auto emit = [&](const char* series, const std::optional<double>& p) {
      if (!p) {
        w.row({x, series, "", "", ""});
        return;
      }
      auto [lo, hi] = wilson(*p, bin.eligible);
      w.row({x, series, csv::format_double(*p), csv::format_double(lo), csv::format_double(hi)});
    };
    emit("increased", bin.p_increased);
    emit("decreased", bin.p_decreased);
    emit("maintained", bin.p_maintained);
  }
}

std::vector<std::string> emit_plot_data(const DoseChangeProfile* profile,
                                        const std::vector<HazardRatioReport>& reports, const fs::path& dir) {
  std::vector<std::string> names;
  ArtifactWriter out(dir, names);
  if (profile) out.write("plot_dose_change.csv", [&](std::ostream& s) { write_dose_change_plot(*profile, s); });
  for (const auto& r : reports)
    out.write("plot_msm_" + file_stem(r.model) + ".csv", [&](std::ostream& s) { write_plot_data(r, s); });
  return names;
}

PipelineResult run_pipeline(const RunConfig& config, Stage until, std::ostream* log) {
  PipelineResult result;
  auto note = [&](const std::string& line) {
    if (log) *log << line << "\n";
  };
  const fs::path dir = config.output_dir;
  try {
    config.validate();
    prepare_output_dir(dir);
  } catch (const Error& e) {
    result.exit_code = static_cast<int>(e.exit_code());
    result.message = e.what();
    return result;
  }

  ArtifactWriter out(dir, result.artifacts);
  Stage current = Stage::ingest;
  Cohort cohort;
  CloneTable clones;
  std::optional<DoseChangeProfile> profile;
  bool weighted = false;
  std::vector<HazardRatioReport> reports;
  std::vector<std::pair<MsmRun, MsmFit>> fits;
  auto done = [&](Stage s) {
    result.completed = s;
    note("stage " + to_string(s) + ": done");
    return s == until;
  };

  try {
    // ingest
    current = Stage::ingest;
    auto ingest = ingest_cohort_files(config.input.visits, config.input.schema, config.input.outcomes,
                                      config.input.delimiter);
    cohort = std::move(ingest.cohort);
    if (cohort.subjects.empty()) throw DataError("no subjects left after ingest");
    note("ingest: " + std::to_string(cohort.subjects.size()) + " subjects, " +
         std::to_string(ingest.rejected.size()) + " rejected rows");
    out.write("rejected_rows.csv", [&](std::ostream& s) { write_rejected(ingest.rejected, s); });
    out.write("cohort_summary.csv",
              [&](std::ostream& s) { write_summary(summarize_cohort(cohort, config.report.summary_split), s); });
    if (!config.report.marker_edges.empty()) {
      profile = dose_change_profile(cohort, config.report.dose_change_threshold, config.report.marker_edges,
                                    config.trace.marker_source);
      out.write("dose_change_profile.csv", [&](std::ostream& s) { write_dose_change_profile(*profile, s); });
    }
    if (until == Stage::ingest) {
      out.write("cohort_visits.csv", [&](std::ostream& s) { emit_cohort(cohort, s, nullptr); });
      std::ostringstream visits_sink;
      out.write("cohort_outcomes.csv", [&](std::ostream& s) { emit_cohort(cohort, visits_sink, &s); });
    }
    if (done(Stage::ingest)) goto finish;

    current = Stage::clone;
    {
      CloneOptions options;
      options.horizon = config.horizon;
      options.trace = config.trace;
      clones = clone_cohort(cohort, config.grid, config.start_t, options);
      note("clone: " + std::to_string(clones.rows.size()) + " clone rows");
      out.write("clone_table.csv", [&](std::ostream& s) { write_clone_table(clones, s); });
    }
    if (done(Stage::clone)) goto finish;

    current = Stage::weights;
    if (!config.weights.processes.empty()) {
      std::vector<WeightTable> tables;
      std::vector<PositivityReport> positivity;
      for (auto process : config.weights.processes) {
        const auto& spec =
            process == CensoringProcess::adherence ? config.weights.adherence : config.weights.censoring;
        WeightModels models = fit_weight_models(clones, process, spec);
        for (const auto& wmsg : models.warnings) result.warnings.push_back(wmsg);
        positivity.push_back(positivity_diagnostics(models, clones));
        tables.push_back(compute_weights(clones, models));
        for (const auto& wmsg : tables.back().warnings) result.warnings.push_back(wmsg);
      }
      CombinedWeights combined = combine_weights(clones, tables, combined_truncation(config.weights));
      apply_weights(clones, tables, combined);
      weighted = true;
      note("weights: mean " + csv::format_double(combined.before.mean) + ", max " +
           csv::format_double(combined.before.max));
      out.write("weight_audit.csv", [&](std::ostream& s) { write_weight_audit(clones, tables, combined, s); });
      out.write("positivity.csv", [&](std::ostream& s) { write_positivity(positivity, s); });
      out.write("weight_summary.csv", [&](std::ostream& s) { write_weight_summary(combined, s); });
      out.write("clone_table.csv", [&](std::ostream& s) { write_clone_table(clones, s); });
    }
    if (done(Stage::weights)) goto finish;

    current = Stage::logrank;
    if (!config.logrank.pairs.empty()) {
      std::vector<std::pair<std::pair<int, int>, LogRankResult>> results;
      int origin = grid_origin(clones);
      for (const auto& pair : config.logrank.pairs) {
        auto data = paired_survival(clones, pair.first, pair.second, config.logrank.weighted && weighted);
        results.emplace_back(pair, logrank_test(data));
        out.write("nelson_" + std::to_string(pair.first) + "_" + std::to_string(pair.second) + ".csv",
                  [&](std::ostream& s) { write_nelson_paths(data, pair.first, pair.second, origin, s); });
      }
      out.write("logrank.csv", [&](std::ostream& s) { write_logrank_table(results, config.grid, s); });
    }
    if (done(Stage::logrank)) goto finish;

    current = Stage::msm;
    {
      std::optional<PersonTime> pt_weighted, pt_plain;
      for (const auto& run : config.msm) {
        auto& pt = run.weighted ? pt_weighted : pt_plain;
        if (!pt) pt = build_person_time(clones, run.weighted);
        MsmSpec spec = run.spec;
        if (spec.regimen_order.empty() && (spec.form == EffectForm::linear || spec.form == EffectForm::linear_x_logtime))
          spec.regimen_order = midpoint_ranks(config.grid);
        MsmFit fit = fit_msm(*pt, spec);
        for (const auto& wmsg : fit.warnings) result.warnings.push_back(run.spec.name + ": " + wmsg);
        HazardRatioReport rep = report(fit, config.grid, run.months);
        std::string stem = file_stem(run.spec.name);
        out.write("msm_" + stem + "_coefficients.csv", [&](std::ostream& s) { write_coefficients(fit, s); });
        out.write("msm_" + stem + "_hr.csv", [&](std::ostream& s) { write_report(rep, s); });
        note("msm " + run.spec.name + ": " + std::to_string(fit.rows) + " person-time rows");
        reports.push_back(std::move(rep));
      }
    }
    if (done(Stage::msm)) goto finish;

    current = Stage::report;
    for (const auto& rep : reports) {
      out.write("msm_" + file_stem(rep.model) + "_table.csv",
                [&](std::ostream& s) { write_formatted_table(rep, s); });
    }
    for (const auto& name : emit_plot_data(profile ? &*profile : nullptr, reports, dir)) {
      bool seen = false;
      for (const auto& n : result.artifacts) seen = seen || n == name;
      if (!seen) result.artifacts.push_back(name);
    }
    done(Stage::report);
  } catch (const Error& e) {
    result.failed = current;
    result.exit_code = static_cast<int>(e.exit_code());
    result.message = to_string(current) + ": " + e.what();
  } catch (const std::exception& e) {
    result.failed = current;
    result.exit_code = static_cast<int>(ExitCode::numerical);
    result.message = to_string(current) + ": " + e.what();
  }

finish:
  if (!result.warnings.empty())
    out.write("warnings.csv", [&](std::ostream& s) { write_warnings(result.warnings, s); });
  if (result.failed) {
    std::ofstream marker(dir / "FAILED", std::ios::binary | std::ios::trunc);
    marker << "stage: " << to_string(*result.failed) << "\nerror: " << result.message << "\n";
    note("failed in stage " + to_string(*result.failed) + ": " + result.message);
  }
  try {
    write_manifest(dir, config, result);
  } catch (const std::exception& e) {
    if (!result.failed) {
      result.exit_code = static_cast<int>(ExitCode::config);
      result.message = std::string("manifest: ") + e.what();
    }
  }
  return result;
}

}  // namespace dtrclone

#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtrclone {

enum class Race { white, black, other };

std::string_view to_string(Race race);
std::optional<Race> parse_race(std::string_view text);

struct BaselineCovariates {
  bool male = false;
  double age = 0.0;
  Race race = Race::white;
  bool diabetes = false;
  bool hypertension = false;
  std::map<std::string, double> extra;

  bool operator==(const BaselineCovariates&) const = default;
};

struct Visit {
  int t = 0;
  std::optional<double> marker;  // hematocrit, %
  std::optional<double> dose;    // epoetin, 10,000-unit multiples
  std::map<std::string, double> aux;

  bool operator==(const Visit&) const = default;
};

struct SubjectHistory {
  std::string id;
  BaselineCovariates baseline;
  std::vector<Visit> visits;  // strictly increasing t
  std::optional<double> event_time;
  int last_followup = 0;
  bool event_observed = false;

  // Visit with index t, or nullptr.
  const Visit* visit_at(int t) const;

  bool operator==(const SubjectHistory&) const = default;
};

// Throws DataError when the subject violates a structural invariant.
void validate(const SubjectHistory& subject);

// Maps canonical fields onto input column names. An empty name for a
// baseline field means the column is absent and the default value is used.
struct CohortSchema {
  std::string subject_id = "subject_id";
  std::string t = "t";
  std::string marker = "marker";
  std::string dose = "dose";
  std::string sex = "sex";
  std::string age = "age";
  std::string race = "race";
  std::string diabetes = "diabetes";
  std::string hypertension = "hypertension";
  std::vector<std::string> extra_baseline;
  std::vector<std::string> aux;
};

struct Cohort {
  std::vector<SubjectHistory> subjects;
  int visit_horizon = 0;
  CohortSchema schema;

  const SubjectHistory* find(std::string_view id) const;
};

struct RowDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  Cohort cohort;
  std::vector<RowDiagnostic> rejected;
};

// Reads one row per (subject, visit). Baseline covariates come from the
// subject's earliest row. `outcomes` may be null, in which case every subject
// is event-free with follow-up through its last visit.
IngestResult ingest_cohort(std::istream& visits, const CohortSchema& schema,
                           std::istream* outcomes = nullptr, char delim = ',');
IngestResult ingest_cohort_files(const std::string& visits_path, const CohortSchema& schema,
                                 const std::string& outcomes_path = {}, char delim = ',');

// Writes the canonical form: subjects in input order, visits by t.
void emit_cohort(const Cohort& cohort, std::ostream& visits, std::ostream* outcomes = nullptr,
                 char delim = ',');

Cohort make_cohort(std::vector<SubjectHistory> subjects, CohortSchema schema = {});

// 1 iff the event is observed and falls in (t, t + 1].
bool event_indicator(const SubjectHistory& subject, int t);

enum class MarkerSource { current, two_month_average };

struct ResolvedMarker {
  std::optional<double> value;
  bool carried = false;  // value came from an earlier visit
};

// Per-visit marker with last observation carried forward. With
// two_month_average the current and previous visit values are averaged.
std::vector<ResolvedMarker> resolve_markers(const SubjectHistory& subject,
                                            MarkerSource source = MarkerSource::current);

struct DoseChangeBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t eligible = 0;
  std::size_t increased = 0;
  std::size_t decreased = 0;
  std::size_t maintained = 0;
  // Absent when the bin has no eligible pairs.
  std::optional<double> p_increased;
  std::optional<double> p_decreased;
  std::optional<double> p_maintained;
};

struct DoseChangeProfile {
  double threshold = 0.25;
  std::vector<DoseChangeBin> bins;
  std::size_t ineligible_pairs = 0;  // missing dose or zero previous dose
  std::size_t out_of_range = 0;      // marker missing or outside all bins
};

// Proportion of person-months whose dose rose or fell by at least
// `threshold` relative to the previous visit, binned by current marker.
// Bins are [edge_i, edge_{i+1}).
DoseChangeProfile dose_change_profile(const Cohort& cohort, double threshold,
                                      const std::vector<double>& marker_edges,
                                      MarkerSource source = MarkerSource::current);

enum class SummaryKind { count, percent, mean_sd };

struct SummaryCell {
  std::size_t count = 0;  // contributing subjects
  std::optional<double> value;  // percent or mean
  std::optional<double> sd;
};

struct SummaryRow {
  std::string characteristic;
  SummaryKind kind = SummaryKind::count;
  std::array<SummaryCell, 3> cells;  // all, group == 1, group == 0
};

struct CohortSummary {
  std::array<std::string, 3> columns;
  std::vector<SummaryRow> rows;
};

// Demographic table split by a binary baseline covariate: "sex",
// "diabetes", "hypertension" or an extra baseline name coded 0/1.
CohortSummary summarize_cohort(const Cohort& cohort, std::string_view split_by = "sex");

void write_summary(const CohortSummary& summary, std::ostream& out, char delim = ',');
void write_dose_change_profile(const DoseChangeProfile& profile, std::ostream& out,
                               char delim = ',');

}  // namespace dtrclone

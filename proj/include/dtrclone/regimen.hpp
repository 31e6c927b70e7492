#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dtrclone/cohort.hpp"

namespace dtrclone {

enum class Zone { above, within, below };

struct DoseInterval {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  // Finite endpoints are inclusive.
  bool contains(double dose) const { return dose >= lo && dose <= hi; }
};

// Multiplicative dose-change rule keyed on the marker zone:
//   marker > b2          -> factor in [p1, p2]
//   b1 <= marker <= b2   -> factor in [p3, p4]
//   marker < b1          -> factor in [p5, p6]
struct RegimenSpec {
  int id = 0;
  std::array<double, 6> p{0.0, 0.75, 0.75, 1.25, 1.25, std::numeric_limits<double>::infinity()};
  double b1 = 30.0;
  double b2 = 36.0;
  std::string label;

  Zone zone(double marker) const;
  double midpoint() const { return 0.5 * (b1 + b2); }
  // Factor bounds for a zone.
  std::pair<double, double> factors(Zone zone) const;

  // Throws ConfigError on violated invariants; returns non-fatal warnings.
  std::vector<std::string> validate() const;
};

std::string family_label(double p, double lo, double hi);

// G(p, x - 3, x + 3): decrease by at least p above target, stay within
// +/-25% inside, increase by at least p below.
RegimenSpec usrds_family(double p, double x, int id = 0);

struct RegimenGrid {
  std::vector<RegimenSpec> specs;
  int reference_id = 0;

  void validate() const;
  const RegimenSpec& by_id(int id) const;
  bool contains(int id) const;
};

// Grid over every (p, x) pair; ids follow p-major order. The reference is
// looked up by label.
RegimenGrid family_grid(const std::vector<double>& p_values, const std::vector<double>& x_values,
                        const std::string& reference_label);

// Requires prev_dose > 0.
DoseInterval allowable_dose_interval(const RegimenSpec& spec, double prev_dose, double marker);

// With prev_dose == 0 the multiplicative rule is undefined: in the increase
// zone any positive dose adheres, otherwise only a zero dose does.
bool is_adherent(const RegimenSpec& spec, double prev_dose, double marker, double new_dose);

struct TraceOptions {
  MarkerSource marker_source = MarkerSource::current;
  // Treat a visit with no recorded marker as nonadherent instead of
  // carrying the last value forward.
  bool censor_on_missing_marker = false;
};

struct AdherenceTrace {
  std::vector<int> t;
  std::vector<bool> adherent;  // adherent[0] (start visit) is always true
  std::optional<int> censor_visit;
};

// Evaluates adherence over consecutive visits from start_t. The trace ends at
// the first gap in the visit sequence. A visit with a missing current or
// previous dose, or no usable marker, is nonadherent.
AdherenceTrace adherence_trace(const RegimenSpec& spec, const SubjectHistory& subject, int start_t,
                               const TraceOptions& options = {});

struct CloneRow {
  std::size_t subject = 0;  // index into CloneTable::subject_ids
  int regimen = 0;
  int t = 0;
  bool adherent = true;
  bool censored = false;
  bool event = false;
  double marker = std::numeric_limits<double>::quiet_NaN();
  double prev_marker = std::numeric_limits<double>::quiet_NaN();
  double prev_dose = std::numeric_limits<double>::quiet_NaN();
  double dose = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> sw_adherence;
  std::optional<double> sw_admin;
  std::optional<double> sw_ltfu;
  std::optional<double> w_total;
};

// How a clone's follow-up ended.
enum class CloneEnd { event, nonadherence, administrative, lost };

struct CloneTable {
  std::vector<CloneRow> rows;  // ordered by (subject, regimen, t)
  std::vector<std::string> subject_ids;
  std::vector<BaselineCovariates> baselines;
  std::vector<int> regimen_ids;
  // Rows with t > start_t had their adherence evaluated; the start row is
  // adherent by construction.
  int start_t = 0;
  int horizon = 0;

  std::size_t n_subjects() const { return subject_ids.size(); }
  std::size_t n_regimens() const { return regimen_ids.size(); }
};

// Half-open [begin, end) row range of one clone.
struct CloneSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<CloneSpan> clone_spans(const CloneTable& table);
CloneEnd clone_end(const CloneTable& table, const CloneSpan& span);

struct CloneOptions {
  std::optional<int> horizon;  // defaults to the cohort's visit horizon
  TraceOptions trace;
};

// One clone per (subject, regimen): rows from start_t up to the first
// nonadherent visit (kept as a censored row), the event visit, last
// follow-up or the horizon, whichever comes first.
CloneTable clone_cohort(const Cohort& cohort, const RegimenGrid& grid, int start_t,
                        const CloneOptions& options = {});

// Delimiter-separated export with one line per CloneRow; baseline extras are
// written as "extra.<name>" columns.
void write_clone_table(const CloneTable& table, std::ostream& out, char delim = ',');
CloneTable read_clone_table(std::istream& in, char delim = ',');

}  // namespace dtrclone

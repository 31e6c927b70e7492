#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dtrclone/design.hpp"
#include "dtrclone/glm.hpp"
#include "dtrclone/regimen.hpp"

namespace dtrclone {

enum class EffectForm { linear, factor, linear_x_logtime, factor_x_logtime };

std::string to_string(EffectForm form);
EffectForm parse_effect_form(const std::string& text);
bool has_time_interaction(EffectForm form);

struct MsmSpec {
  std::string name = "msm";
  EffectForm form = EffectForm::factor;
  DesignSpec baseline_terms;  // shared covariate block, baseline terms only
  DesignSpec time_intercept = DesignSpec::parse({"intercept", "time_indicators"});
  int reference_regimen = 0;
  // Ordinal per regimen for linear forms; filled from target midpoint ranks
  // when empty.
  std::map<int, double> regimen_order;
  FitOptions fit;

  void validate() const;
};

// Rank of each regimen's target midpoint (1 = lowest); equal midpoints share
// a rank.
std::map<int, double> midpoint_ranks(const RegimenGrid& grid);

// One row per clone visit at risk: adherent rows with response D(t).
struct PersonTime {
  std::shared_ptr<const std::vector<BaselineCovariates>> baselines;
  std::vector<std::size_t> subject;  // cluster id
  std::vector<int> regimen;
  std::vector<int> t;
  std::vector<double> marker, prev_marker, prev_dose, dose;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  int origin = 0;  // time mapped to log-time 0

  std::size_t size() const { return t.size(); }
  RowView view(std::size_t i) const;
};

// Throws DataError naming the row when use_weights is set and a row lacks
// w_total.
PersonTime build_person_time(const CloneTable& clones, bool use_weights = true);

struct MsmFit {
  MsmSpec spec;
  FittedGlm glm;
  std::size_t rows = 0;
  int origin = 0;
  std::vector<int> regimens;                    // regimens present, table order
  std::map<int, double> effective_sample_size;  // Kish, per regimen
  std::map<int, std::size_t> events;
  std::vector<int> unstable;                    // regimens without events
  std::vector<std::string> warnings;

  // Coefficient positions.
  std::map<int, Eigen::Index> main_column;
  std::map<int, Eigen::Index> interaction_column;
  Eigen::Index ordinal_column = -1;
  Eigen::Index ordinal_interaction_column = -1;
};

MsmFit fit_msm(const PersonTime& table, const MsmSpec& spec);

struct HazardRatio {
  std::string label;
  std::optional<int> month;
  double log_hr = 0.0;
  double se = 0.0;
  double hr = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  bool reference = false;
  bool available = true;  // false for unstable comparisons
};

// exp(c'beta) with CI exp(c'beta +/- 1.959964 sqrt(c' V c)) using the robust
// covariance. Month is required to be absent for forms without a time
// interaction; for interaction forms an absent month means the origin.
HazardRatio hazard_ratio(const MsmFit& fit, int regimen, int versus, std::optional<int> month = std::nullopt);
// Per unit increase in the regimen ordinal (linear forms only).
HazardRatio hazard_ratio_unit(const MsmFit& fit, std::optional<int> month = std::nullopt);
HazardRatio hazard_ratio_from_estimate(double log_hr, double se);

struct HazardRatioReport {
  std::string model;
  EffectForm form = EffectForm::factor;
  std::vector<HazardRatio> rows;
  // Plot x per row: regimen midpoint for factor forms, month for linear ones.
  std::vector<double> x;
};

// Factor forms: every regimen against the reference (reference row included)
// overall or per month. Linear forms: unit increase overall or per month.
HazardRatioReport report(const MsmFit& fit, const RegimenGrid& grid, const std::vector<int>& months = {});

void write_report(const HazardRatioReport& report, std::ostream& out, char delim = ',');
// "Regimen comparison,Hazard ratio,95% CI" or "Month,Hazard ratio,95% CI".
void write_formatted_table(const HazardRatioReport& report, std::ostream& out, char delim = ',');
// x,series,value,ci_low,ci_high with log hazard ratios.
void write_plot_data(const HazardRatioReport& report, std::ostream& out, char delim = ',');
void write_coefficients(const MsmFit& fit, std::ostream& out, char delim = ',');

}  // namespace dtrclone

#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "dtrclone/cohort.hpp"

namespace dtrclone {

// Natural cubic spline basis in t: {t, s_1, ..., s_{k-2}} for k knots.
// Linear beyond the boundary knots; nonlinear terms vanish for t at or
// below the first knot. Throws ConfigError for fewer than two knots or
// knots that are not strictly increasing.
std::vector<double> spline_basis(double t, const std::vector<double>& knots);

// Covariate values of one modelled record.
struct RowView {
  int t = 0;
  const BaselineCovariates* baseline = nullptr;
  double marker = 0.0;
  double prev_marker = 0.0;
  double prev_dose = 0.0;
  double dose = 0.0;
};

enum class TermKind {
  intercept,
  time_linear,
  time_indicators,
  time_spline,
  sex,
  age,
  race,
  diabetes,
  hypertension,
  extra,
  marker,
  prev_dose,
  dose,
  marker_diff,
  marker_avg_bins,
};

struct Term {
  TermKind kind = TermKind::intercept;
  std::string extra_name;     // for TermKind::extra
  std::vector<double> knots;  // for time_spline; empty selects quantile knots

  bool time_varying() const;
  std::string name() const;
};

// Parses "intercept", "time", "time_indicators", "time_spline", "sex",
// "age", "race", "diabetes", "hypertension", "extra:<name>", "marker",
// "prev_dose", "dose", "marker_diff" and "marker_avg_bins".
Term parse_term(const std::string& text);

struct DesignSpec {
  std::vector<Term> terms;

  static DesignSpec parse(const std::vector<std::string>& names);
  bool has_intercept() const;
  // Throws ConfigError when term names repeat or spline knots are unsorted.
  void validate() const;
  // Same spec without time-varying terms.
  DesignSpec baseline_only() const;
};

// A DesignSpec with data-dependent pieces (indicator levels, quantile knots)
// fixed, so the same columns can be rebuilt for any set of rows.
class FrozenDesign {
 public:
  FrozenDesign() = default;
  static FrozenDesign freeze(const DesignSpec& spec, std::span<const RowView> rows);

  Eigen::MatrixXd build(std::span<const RowView> rows) const;
  const std::vector<std::string>& column_names() const { return names_; }
  Eigen::Index columns() const { return static_cast<Eigen::Index>(names_.size()); }

 private:
  struct Frozen {
    Term term;
    std::vector<int> levels;     // time indicator levels
    std::vector<double> knots;   // spline knots
  };
  std::vector<Frozen> frozen_;
  std::vector<std::string> names_;
};

// Default quantiles used to place spline knots.
inline const std::vector<double> kDefaultKnotQuantiles{0.05, 0.35, 0.65, 0.95};

}  // namespace dtrclone

#include "dtrclone/design.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/stats.hpp"

namespace dtrclone {

namespace {

double cube_plus(double x) { return x > 0 ? x * x * x : 0.0; }

void check_knots(const std::vector<double>& knots) {
  if (knots.size() < 2) throw ConfigError("spline basis needs at least two knots");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) throw ConfigError("spline knots must be strictly increasing");
  }
}

double require_value(double v, const Term& term) {
  if (std::isnan(v)) throw DataError("missing value for covariate term '" + term.name() + "'");
  return v;
}

// Reference band is (32, 36].
int marker_band(double avg) {
  if (avg <= 28) return 0;
  if (avg <= 32) return 1;
  if (avg <= 36) return -1;
  if (avg <= 40) return 2;
  return 3;
}

}  // namespace

std::vector<double> spline_basis(double t, const std::vector<double>& knots) {
  check_knots(knots);
  const std::size_t k = knots.size();
  std::vector<double> basis{t};
  if (k == 2) return basis;
  const double last = knots[k - 1];
  const double penult = knots[k - 2];
  const double scale = (last - knots[0]) * (last - knots[0]);
  for (std::size_t j = 0; j + 2 < k; ++j) {
    double v = cube_plus(t - knots[j]) -
               cube_plus(t - penult) * (last - knots[j]) / (last - penult) +
               cube_plus(t - last) * (penult - knots[j]) / (last - penult);
    basis.push_back(v / scale);
  }
  return basis;
}

bool Term::time_varying() const {
  switch (kind) {
    case TermKind::marker:
    case TermKind::prev_dose:
    case TermKind::dose:
    case TermKind::marker_diff:
    case TermKind::marker_avg_bins:
      return true;
    default:
      return false;
  }
}

std::string Term::name() const {
  switch (kind) {
    case TermKind::intercept: return "intercept";
    case TermKind::time_linear: return "time";
    case TermKind::time_indicators: return "time_indicators";
    case TermKind::time_spline: return "time_spline";
    case TermKind::sex: return "sex";
    case TermKind::age: return "age";
    case TermKind::race: return "race";
    case TermKind::diabetes: return "diabetes";
    case TermKind::hypertension: return "hypertension";
    case TermKind::extra: return "extra:" + extra_name;
    case TermKind::marker: return "marker";
    case TermKind::prev_dose: return "prev_dose";
    case TermKind::dose: return "dose";
    case TermKind::marker_diff: return "marker_diff";
    case TermKind::marker_avg_bins: return "marker_avg_bins";
  }
  return "?";
}

Term parse_term(const std::string& text) {
  static const std::pair<const char*, TermKind> table[] = {
      {"intercept", TermKind::intercept},
      {"time", TermKind::time_linear},
      {"time_indicators", TermKind::time_indicators},
      {"time_spline", TermKind::time_spline},
      {"sex", TermKind::sex},
      {"age", TermKind::age},
      {"race", TermKind::race},
      {"diabetes", TermKind::diabetes},
      {"hypertension", TermKind::hypertension},
      {"marker", TermKind::marker},
      {"prev_dose", TermKind::prev_dose},
      {"dose", TermKind::dose},
      {"marker_diff", TermKind::marker_diff},
      {"marker_avg_bins", TermKind::marker_avg_bins},
  };
  Term term;
  if (text.rfind("extra:", 0) == 0 && text.size() > 6) {
    term.kind = TermKind::extra;
    term.extra_name = text.substr(6);
    return term;
  }
  for (const auto& [name, kind] : table) {
    if (text == name) {
      term.kind = kind;
      return term;
    }
  }
  throw ConfigError("unknown design term '" + text + "'");
}

DesignSpec DesignSpec::parse(const std::vector<std::string>& names) {
  DesignSpec spec;
  for (const auto& n : names) spec.terms.push_back(parse_term(n));
  spec.validate();
  return spec;
}

bool DesignSpec::has_intercept() const {
  return std::any_of(terms.begin(), terms.end(),
                     [](const Term& t) { return t.kind == TermKind::intercept; });
}

void DesignSpec::validate() const {
  std::set<std::string> seen;
  for (const auto& t : terms) {
    if (!seen.insert(t.name()).second) throw ConfigError("duplicate design term '" + t.name() + "'");
    if (t.kind == TermKind::time_spline && !t.knots.empty()) check_knots(t.knots);
  }
}

DesignSpec DesignSpec::baseline_only() const {
  DesignSpec out;
  for (const auto& t : terms) {
    if (!t.time_varying()) out.terms.push_back(t);
  }
  return out;
}

FrozenDesign FrozenDesign::freeze(const DesignSpec& spec, std::span<const RowView> rows) {
  spec.validate();
  FrozenDesign design;
  bool intercept = spec.has_intercept();
  for (const auto& term : spec.terms) {
    Frozen f{term, {}, {}};
    switch (term.kind) {
      case TermKind::intercept:
        design.names_.push_back("(intercept)");
        break;
      case TermKind::time_linear:
        design.names_.push_back("t");
        break;
      case TermKind::time_indicators: {
        std::set<int> levels;
        for (const auto& r : rows) levels.insert(r.t);
        f.levels.assign(levels.begin(), levels.end());
        if (intercept && !f.levels.empty()) f.levels.erase(f.levels.begin());
        for (int l : f.levels) design.names_.push_back("t=" + std::to_string(l));
        break;
      }
      case TermKind::time_spline: {
        if (!term.knots.empty()) {
          f.knots = term.knots;
        } else {
          std::vector<double> times;
          times.reserve(rows.size());
          for (const auto& r : rows) times.push_back(r.t);
          if (times.empty()) throw ConfigError("cannot place spline knots without data");
          for (double q : kDefaultKnotQuantiles) {
            double k = stats::quantile(times, q);
            if (f.knots.empty() || k > f.knots.back()) f.knots.push_back(k);
          }
        }
        check_knots(f.knots);
        design.names_.push_back("t");
        for (std::size_t j = 1; j + 1 < f.knots.size(); ++j)
          design.names_.push_back("t_spline" + std::to_string(j));
        break;
      }
      case TermKind::race:
        design.names_.push_back("race=black");
        design.names_.push_back("race=other");
        break;
      case TermKind::marker_avg_bins:
        design.names_.push_back("marker_avg(0,28]");
        design.names_.push_back("marker_avg(28,32]");
        design.names_.push_back("marker_avg(36,40]");
        design.names_.push_back("marker_avg(40,inf)");
        break;
      default:
        design.names_.push_back(term.name());
        break;
    }
    design.frozen_.push_back(std::move(f));
  }
  return design;
}

Eigen::MatrixXd FrozenDesign::build(std::span<const RowView> rows) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), columns());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    Eigen::Index c = 0;
    for (const auto& f : frozen_) {
      const auto& term = f.term;
      const BaselineCovariates* b = r.baseline;
      auto need_baseline = [&]() -> const BaselineCovariates& {
        if (!b) throw DataError("term '" + term.name() + "' needs baseline covariates");
        return *b;
      };
      switch (term.kind) {
        case TermKind::intercept:
          x(i, c++) = 1.0;
          break;
        case TermKind::time_linear:
          x(i, c++) = r.t;
          break;
        case TermKind::time_indicators:
          for (int l : f.levels) x(i, c++) = r.t == l ? 1.0 : 0.0;
          break;
        case TermKind::time_spline:
          for (double v : spline_basis(r.t, f.knots)) x(i, c++) = v;
          break;
        case TermKind::sex:
          x(i, c++) = need_baseline().male ? 1.0 : 0.0;
          break;
        case TermKind::age:
          x(i, c++) = need_baseline().age;
          break;
        case TermKind::race: {
          auto race = need_baseline().race;
          x(i, c++) = race == Race::black ? 1.0 : 0.0;
          x(i, c++) = race == Race::other ? 1.0 : 0.0;
          break;
        }
        case TermKind::diabetes:
          x(i, c++) = need_baseline().diabetes ? 1.0 : 0.0;
          break;
        case TermKind::hypertension:
          x(i, c++) = need_baseline().hypertension ? 1.0 : 0.0;
          break;
        case TermKind::extra: {
          const auto& extra = need_baseline().extra;
          auto it = extra.find(term.extra_name);
          if (it == extra.end())
            throw DataError("baseline covariate '" + term.extra_name + "' missing");
          x(i, c++) = it->second;
          break;
        }
        case TermKind::marker:
          x(i, c++) = require_value(r.marker, term);
          break;
        case TermKind::prev_dose:
          x(i, c++) = require_value(r.prev_dose, term);
          break;
        case TermKind::dose:
          x(i, c++) = require_value(r.dose, term);
          break;
        case TermKind::marker_diff:
          x(i, c++) = std::isnan(r.prev_marker) ? 0.0 : require_value(r.marker, term) - r.prev_marker;
          break;
        case TermKind::marker_avg_bins: {
          double m = require_value(r.marker, term);
          double avg = std::isnan(r.prev_marker) ? m : 0.5 * (m + r.prev_marker);
          int band = marker_band(avg);
          for (int j = 0; j < 4; ++j) x(i, c++) = band == j ? 1.0 : 0.0;
          break;
        }
      }
    }
  }
  return x;
}

}  // namespace dtrclone

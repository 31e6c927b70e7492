#include "dtrclone/msm.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/stats.hpp"

namespace dtrclone {

std::string to_string(EffectForm form) {
  switch (form) {
    case EffectForm::linear: return "linear";
    case EffectForm::factor: return "factor";
    case EffectForm::linear_x_logtime: return "linear_x_logtime";
    case EffectForm::factor_x_logtime: return "factor_x_logtime";
  }
  return "factor";
}

EffectForm parse_effect_form(const std::string& text) {
  if (text == "linear") return EffectForm::linear;
  if (text == "factor") return EffectForm::factor;
  if (text == "linear_x_logtime") return EffectForm::linear_x_logtime;
  if (text == "factor_x_logtime") return EffectForm::factor_x_logtime;
  throw ConfigError("unknown effect form '" + text + "'");
}

bool has_time_interaction(EffectForm form) {
  return form == EffectForm::linear_x_logtime || form == EffectForm::factor_x_logtime;
}

namespace {

bool is_linear(EffectForm form) { return form == EffectForm::linear || form == EffectForm::linear_x_logtime; }

double log_time(int t, int origin) { return std::log(static_cast<double>(t - origin + 1)); }

}  // namespace

void MsmSpec::validate() const {
  baseline_terms.validate();
  time_intercept.validate();
  for (const auto& term : baseline_terms.terms) {
    if (term.time_varying()) throw ConfigError("MSM baseline term '" + term.name() + "' is time-varying");
  }
  if (baseline_terms.has_intercept() && time_intercept.has_intercept())
    throw ConfigError("intercept appears in both the time and baseline blocks");
  for (const auto& term : time_intercept.terms) {
    if (term.kind != TermKind::intercept && term.kind != TermKind::time_linear &&
        term.kind != TermKind::time_indicators && term.kind != TermKind::time_spline)
      throw ConfigError("time intercept term '" + term.name() + "' is not a function of time");
  }
  if (is_linear(form) && !regimen_order.empty()) {
    std::set<double> seen;
    for (const auto& [id, ord] : regimen_order) {
      if (!seen.insert(ord).second) throw ConfigError("regimen ordinals must be unique for linear forms");
    }
    if (!regimen_order.count(reference_regimen))
      throw ConfigError("reference regimen " + std::to_string(reference_regimen) + " has no ordinal");
  }
}

std::map<int, double> midpoint_ranks(const RegimenGrid& grid) {
  std::set<double> mids;
  for (const auto& s : grid.specs) mids.insert(s.midpoint());
  std::map<int, double> ranks;
  for (const auto& s : grid.specs) {
    auto pos = std::distance(mids.begin(), mids.find(s.midpoint()));
    ranks[s.id] = static_cast<double>(pos + 1);
  }
  return ranks;
}

RowView PersonTime::view(std::size_t i) const {
  RowView v;
  v.t = t[i];
  v.baseline = &(*baselines)[subject[i]];
  v.marker = marker[i];
  v.prev_marker = prev_marker[i];
  v.prev_dose = prev_dose[i];
  v.dose = dose[i];
  return v;
}

PersonTime build_person_time(const CloneTable& clones, bool use_weights) {
  PersonTime pt;
  pt.baselines = std::make_shared<const std::vector<BaselineCovariates>>(clones.baselines);
  pt.origin = clones.rows.empty() ? clones.start_t : clones.rows.front().t;
  std::vector<double> y, w;
  for (const auto& r : clones.rows) {
    pt.origin = std::min(pt.origin, r.t);
    if (!r.adherent) continue;
    double weight = 1.0;
    if (use_weights) {
      if (!r.w_total)
        throw DataError("no weight for at-risk row: subject " + clones.subject_ids[r.subject] + ", regimen " +
                        std::to_string(r.regimen) + ", t " + std::to_string(r.t));
      weight = *r.w_total;
    }
    pt.subject.push_back(r.subject);
    pt.regimen.push_back(r.regimen);
    pt.t.push_back(r.t);
    pt.marker.push_back(r.marker);
    pt.prev_marker.push_back(r.prev_marker);
    pt.prev_dose.push_back(r.prev_dose);
    pt.dose.push_back(r.dose);
    y.push_back(r.event ? 1.0 : 0.0);
    w.push_back(weight);
  }
  pt.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  pt.w = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  return pt;
}

MsmFit fit_msm(const PersonTime& table, const MsmSpec& spec) {
  spec.validate();
  if (table.size() == 0) throw DataError("person-time table is empty");
  if (table.y.sum() == 0) throw DataError("person-time table has no events");

  MsmFit fit;
  fit.spec = spec;
  fit.rows = table.size();
  fit.origin = table.origin;

  std::map<int, double> sum_w, sum_w2;
  for (std::size_t i = 0; i < table.size(); ++i) {
    int g = table.regimen[i];
    if (!sum_w.count(g)) fit.regimens.push_back(g);
    double w = table.w[static_cast<Eigen::Index>(i)];
    sum_w[g] += w;
    sum_w2[g] += w * w;
    fit.events[g] += table.y[static_cast<Eigen::Index>(i)] > 0 ? 1 : 0;
  }
  for (int g : fit.regimens) fit.effective_sample_size[g] = sum_w[g] * sum_w[g] / sum_w2[g];
  if (!sum_w.count(spec.reference_regimen))
    throw ConfigError("reference regimen " + std::to_string(spec.reference_regimen) +
                      " has no person-time in the table");
  for (int g : fit.regimens) {
    if (fit.events[g] == 0) {
      fit.unstable.push_back(g);
      fit.warnings.push_back("regimen " + std::to_string(g) + " has no events; its effect is unstable");
    }
  }

  std::map<int, double> order = spec.regimen_order;
  if (is_linear(spec.form)) {
    for (int g : fit.regimens) {
      if (!order.count(g)) throw ConfigError("regimen " + std::to_string(g) + " has no ordinal");
    }
  }

  std::vector<RowView> views;
  views.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) views.push_back(table.view(i));
  FrozenDesign time_design = FrozenDesign::freeze(spec.time_intercept, views);
  FrozenDesign base_design = FrozenDesign::freeze(spec.baseline_terms, views);
  Eigen::MatrixXd xt = time_design.build(views);
  Eigen::MatrixXd xb = base_design.build(views);

  std::vector<std::string> names = time_design.column_names();
  for (const auto& n : base_design.column_names()) names.push_back(n);
  Eigen::Index col = static_cast<Eigen::Index>(names.size());

  std::vector<int> effect_regimens;
  if (is_linear(spec.form)) {
    fit.ordinal_column = col++;
    names.push_back("regimen_ordinal");
    if (spec.form == EffectForm::linear_x_logtime) {
      fit.ordinal_interaction_column = col++;
      names.push_back("regimen_ordinal:log_time");
    }
  } else {
    for (int g : fit.regimens) {
      if (g == spec.reference_regimen) continue;
      if (std::find(fit.unstable.begin(), fit.unstable.end(), g) != fit.unstable.end()) continue;
      effect_regimens.push_back(g);
      fit.main_column[g] = col++;
      names.push_back("regimen=" + std::to_string(g));
    }
    if (spec.form == EffectForm::factor_x_logtime) {
      for (int g : effect_regimens) {
        fit.interaction_column[g] = col++;
        names.push_back("regimen=" + std::to_string(g) + ":log_time");
      }
    }
  }

  // Rows of unstable regimens are dropped from factor fits.
  std::vector<std::size_t> keep;
  keep.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!is_linear(spec.form) &&
        std::find(fit.unstable.begin(), fit.unstable.end(), table.regimen[i]) != fit.unstable.end())
      continue;
    keep.push_back(i);
  }

  const auto n = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, col);
  Eigen::VectorXd y(n), w(n);
  std::vector<std::size_t> clusters(keep.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    std::size_t i = keep[static_cast<std::size_t>(r)];
    auto src = static_cast<Eigen::Index>(i);
    x.row(r).head(xt.cols()) = xt.row(src);
    x.row(r).segment(xt.cols(), xb.cols()) = xb.row(src);
    int g = table.regimen[i];
    double lt = log_time(table.t[i], table.origin);
    if (is_linear(spec.form)) {
      x(r, fit.ordinal_column) = order.at(g);
      if (fit.ordinal_interaction_column >= 0) x(r, fit.ordinal_interaction_column) = order.at(g) * lt;
    } else if (g != spec.reference_regimen) {
      x(r, fit.main_column.at(g)) = 1.0;
      if (auto it = fit.interaction_column.find(g); it != fit.interaction_column.end()) x(r, it->second) = lt;
    }
    y[r] = table.y[src];
    w[r] = table.w[src];
    clusters[static_cast<std::size_t>(r)] = table.subject[i];
  }

  fit.glm = fit_logistic(x, y, w, names, spec.fit);
  for (const auto& msg : fit.glm.warnings) fit.warnings.push_back(msg);
  if (!fit.glm.converged) throw NumericalError("MSM '" + spec.name + "' did not converge");
  fit.glm.robust_covariance = cluster_sandwich_covariance(fit.glm, x, y, w, clusters);
  if (is_linear(spec.form)) fit.spec.regimen_order = order;
  return fit;
}

HazardRatio hazard_ratio_from_estimate(double log_hr, double se) {
  HazardRatio h;
  h.log_hr = log_hr;
  h.se = se;
  h.hr = std::exp(log_hr);
  h.ci_low = std::exp(log_hr - stats::kZ975 * se);
  h.ci_high = std::exp(log_hr + stats::kZ975 * se);
  return h;
}

namespace {

HazardRatio contrast(const MsmFit& fit, const Eigen::VectorXd& c) {
  const Eigen::MatrixXd& v = *fit.glm.robust_covariance;
  double var = std::max(0.0, c.dot(v * c));
  return hazard_ratio_from_estimate(c.dot(fit.glm.coefficients), std::sqrt(var));
}

double month_log_time(const MsmFit& fit, std::optional<int> month) {
  if (!month) return 0.0;
  if (!has_time_interaction(fit.spec.form))
    throw ConfigError("month-specific hazard ratios need a log-time interaction form");
  if (*month < fit.origin) throw ConfigError("month " + std::to_string(*month) + " precedes the time origin");
  return log_time(*month, fit.origin);
}

}  // namespace

HazardRatio hazard_ratio(const MsmFit& fit, int regimen, int versus, std::optional<int> month) {
  double lt = month_log_time(fit, month);
  const auto p = fit.glm.coefficients.size();
  HazardRatio h;
  auto unstable = [&](int g) {
    return std::find(fit.unstable.begin(), fit.unstable.end(), g) != fit.unstable.end();
  };
  for (int g : {regimen, versus}) {
    if (std::find(fit.regimens.begin(), fit.regimens.end(), g) == fit.regimens.end())
      throw ConfigError("regimen " + std::to_string(g) + " is not in the fitted model");
  }
  if (!is_linear(fit.spec.form) && (unstable(regimen) || unstable(versus))) {
    h.available = false;
    h.month = month;
    return h;
  }
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  if (is_linear(fit.spec.form)) {
    double diff = fit.spec.regimen_order.at(regimen) - fit.spec.regimen_order.at(versus);
    c[fit.ordinal_column] = diff;
    if (fit.ordinal_interaction_column >= 0) c[fit.ordinal_interaction_column] = diff * lt;
  } else {
    auto add = [&](int g, double sign) {
      if (g == fit.spec.reference_regimen) return;
      c[fit.main_column.at(g)] += sign;
      if (auto it = fit.interaction_column.find(g); it != fit.interaction_column.end()) c[it->second] += sign * lt;
    };
    add(regimen, 1.0);
    add(versus, -1.0);
  }
  h = contrast(fit, c);
  h.month = month;
  h.reference = regimen == versus;
  return h;
}

HazardRatio hazard_ratio_unit(const MsmFit& fit, std::optional<int> month) {
  if (!is_linear(fit.spec.form)) throw ConfigError("unit-increase hazard ratios need a linear effect form");
  double lt = month_log_time(fit, month);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(fit.glm.coefficients.size());
  c[fit.ordinal_column] = 1.0;
  if (fit.ordinal_interaction_column >= 0) c[fit.ordinal_interaction_column] = lt;
  HazardRatio h = contrast(fit, c);
  h.month = month;
  h.label = "unit increase";
  return h;
}

HazardRatioReport report(const MsmFit& fit, const RegimenGrid& grid, const std::vector<int>& months) {
  HazardRatioReport out;
  out.model = fit.spec.name;
  out.form = fit.spec.form;
  std::vector<std::optional<int>> when;
  if (has_time_interaction(fit.spec.form) && !months.empty()) {
    for (int m : months) when.emplace_back(m);
  } else {
    when.emplace_back(std::nullopt);
  }
  if (is_linear(fit.spec.form)) {
    for (const auto& m : when) {
      out.rows.push_back(hazard_ratio_unit(fit, m));
      out.x.push_back(m ? *m : 0.0);
    }
    return out;
  }
  const RegimenSpec& ref = grid.by_id(fit.spec.reference_regimen);
  for (const auto& m : when) {
    for (const auto& spec : grid.specs) {
      if (std::find(fit.regimens.begin(), fit.regimens.end(), spec.id) == fit.regimens.end()) continue;
      HazardRatio h = hazard_ratio(fit, spec.id, ref.id, m);
      h.label = spec.label + " vs " + ref.label;
      out.rows.push_back(h);
      out.x.push_back(spec.midpoint());
    }
  }
  return out;
}

namespace {

std::string month_text(const HazardRatio& h) { return h.month ? std::to_string(*h.month) : "overall"; }

std::string fmt3(double v) { return csv::format_fixed(v, 3); }

}  // namespace

void write_report(const HazardRatioReport& report, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.comment("model " + report.model + " form=" + to_string(report.form));
  w.schema({"comparison", "month", "log_hr", "se", "hr", "ci_low", "ci_high", "reference", "available"});
  for (const auto& h : report.rows) {
    if (!h.available) {
      w.row({h.label, month_text(h), "NA", "NA", "NA", "NA", "NA", "0", "0"});
      continue;
    }
    w.row({h.label, month_text(h), csv::format_double(h.log_hr), csv::format_double(h.se),
           csv::format_double(h.hr), csv::format_double(h.ci_low), csv::format_double(h.ci_high),
           h.reference ? "1" : "0", "1"});
  }
}

void write_formatted_table(const HazardRatioReport& report, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  bool by_month = report.form == EffectForm::linear_x_logtime;
  w.schema({by_month ? "Month" : "Regimen comparison", "Hazard ratio", "95% CI"});
  for (const auto& h : report.rows) {
    std::string first = by_month ? month_text(h) : h.label;
    if (!by_month && report.form == EffectForm::factor_x_logtime && h.month)
      first += " (month " + std::to_string(*h.month) + ")";
    if (h.reference) {
      w.row({first, "Reference", "--"});
    } else if (!h.available) {
      w.row({first, "NA", "--"});
    } else {
      w.row({first, fmt3(h.hr), "(" + fmt3(h.ci_low) + ", " + fmt3(h.ci_high) + ")"});
    }
  }
}

void write_plot_data(const HazardRatioReport& report, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.schema({"x", "series", "value", "ci_low", "ci_high"});
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& h = report.rows[i];
    std::string series = h.month ? "month " + std::to_string(*h.month) : "overall";
    if (!h.available) {
      w.row({csv::format_double(report.x[i]), series, "NA", "NA", "NA"});
      continue;
    }
    w.row({csv::format_double(report.x[i]), series, csv::format_double(h.log_hr),
           csv::format_double(std::log(h.ci_low)), csv::format_double(std::log(h.ci_high))});
  }
}

void write_coefficients(const MsmFit& fit, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.comment("model " + fit.spec.name + " rows=" + std::to_string(fit.rows) +
            " iterations=" + std::to_string(fit.glm.iterations) + " deviance=" + csv::format_double(fit.glm.deviance));
  w.schema({"term", "estimate", "model_se", "robust_se"});
  for (Eigen::Index j = 0; j < fit.glm.coefficients.size(); ++j) {
    w.row({fit.glm.column_names[static_cast<std::size_t>(j)], csv::format_double(fit.glm.coefficients[j]),
           csv::format_double(std::sqrt(fit.glm.model_covariance(j, j))),
           csv::format_double(std::sqrt((*fit.glm.robust_covariance)(j, j)))});
  }
}

}  // namespace dtrclone

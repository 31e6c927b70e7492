#include "dtrclone/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/stats.hpp"

namespace dtrclone {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPositivityFloor = 1e-12;

bool is_time_term(TermKind kind) {
  return kind == TermKind::intercept || kind == TermKind::time_linear ||
         kind == TermKind::time_indicators || kind == TermKind::time_spline;
}

bool same_spec(const DesignSpec& a, const DesignSpec& b) {
  if (a.terms.size() != b.terms.size()) return false;
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    if (a.terms[i].name() != b.terms[i].name() || a.terms[i].knots != b.terms[i].knots) return false;
  }
  return true;
}

std::string row_label(const CloneTable& clones, const CloneRow& row) {
  return "subject " + clones.subject_ids[row.subject] + ", regimen " + std::to_string(row.regimen) +
         ", t " + std::to_string(row.t);
}

std::string stratum_label(const std::optional<int>& regimen) {
  return regimen ? "regimen " + std::to_string(*regimen) : std::string("pooled stratum");
}

}  // namespace

std::string to_string(CensoringProcess process) {
  switch (process) {
    case CensoringProcess::adherence: return "adherence";
    case CensoringProcess::admin: return "admin";
    case CensoringProcess::ltfu: return "ltfu";
  }
  return "adherence";
}

CensoringProcess parse_process(const std::string& text) {
  if (text == "adherence") return CensoringProcess::adherence;
  if (text == "admin") return CensoringProcess::admin;
  if (text == "ltfu") return CensoringProcess::ltfu;
  throw ConfigError("unknown censoring process '" + text + "'");
}

void WeightModelSpec::validate() const {
  numerator.validate();
  denominator.validate();
  if (numerator.terms.empty() || denominator.terms.empty())
    throw ConfigError("weight models need at least one term");
  for (const auto& term : numerator.terms) {
    if (term.time_varying() && !is_time_term(term.kind))
      throw ConfigError("numerator term '" + term.name() + "' is time-varying");
    bool found = std::any_of(denominator.terms.begin(), denominator.terms.end(),
                             [&](const Term& d) { return d.name() == term.name(); });
    if (!found) throw ConfigError("numerator term '" + term.name() + "' is missing from the denominator");
  }
  if (truncation) {
    auto [lo, hi] = *truncation;
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
      throw ConfigError("truncation percentiles must satisfy 0 <= lower < upper <= 1");
  }
}

std::vector<WeightRecord> weight_records(const CloneTable& clones, CensoringProcess process) {
  std::vector<WeightRecord> records;
  if (process == CensoringProcess::adherence) {
    for (std::size_t i = 0; i < clones.rows.size(); ++i) {
      const auto& r = clones.rows[i];
      if (r.t > clones.start_t) records.push_back({i, r.adherent});
    }
    return records;
  }
  CloneEnd target = process == CensoringProcess::admin ? CloneEnd::administrative : CloneEnd::lost;
  for (const auto& span : clone_spans(clones)) {
    CloneEnd end = clone_end(clones, span);
    for (std::size_t i = span.begin; i < span.end; ++i) {
      const auto& r = clones.rows[i];
      if (!r.adherent || r.event || r.t >= clones.horizon) continue;
      bool last = i + 1 == span.end;
      records.push_back({i, !(last && end == target)});
    }
  }
  return records;
}

RowView row_view(const CloneTable& clones, const CloneRow& row) {
  RowView v;
  v.t = row.t;
  v.baseline = &clones.baselines[row.subject];
  v.marker = row.marker;
  v.prev_marker = row.prev_marker;
  v.prev_dose = row.prev_dose;
  v.dose = row.dose;
  return v;
}

const StratumFit* WeightModels::find(int regimen) const {
  for (const auto& s : strata) {
    if (!s.regimen || *s.regimen == regimen) return &s;
  }
  return nullptr;
}

WeightModels fit_weight_models(const CloneTable& clones, CensoringProcess process,
                               const WeightModelSpec& spec) {
  spec.validate();
  WeightModels models;
  models.process = process;
  auto records = weight_records(clones, process);

  std::map<int, std::vector<WeightRecord>> groups;
  for (const auto& rec : records) {
    int key = spec.stratify_by_regimen ? clones.rows[rec.row].regimen : 0;
    groups[key].push_back(rec);
  }
  for (auto& [key, group] : groups) {
    StratumFit stratum;
    if (spec.stratify_by_regimen) stratum.regimen = key;
    stratum.records = group.size();
    for (const auto& rec : group) stratum.events += rec.response ? 0 : 1;

    if (stratum.events == 0 || stratum.events == stratum.records) {
      stratum.degenerate = true;
      models.warnings.push_back(to_string(process) + " model for " + stratum_label(stratum.regimen) +
                                (stratum.events == 0 ? " has no censoring events" : " has no uncensored records") +
                                "; weights set to 1");
      models.strata.push_back(std::move(stratum));
      continue;
    }

    std::vector<RowView> views;
    views.reserve(group.size());
    Eigen::VectorXd y(static_cast<Eigen::Index>(group.size()));
    for (std::size_t j = 0; j < group.size(); ++j) {
      views.push_back(row_view(clones, clones.rows[group[j].row]));
      y[static_cast<Eigen::Index>(j)] = group[j].response ? 1.0 : 0.0;
    }
    Eigen::VectorXd w = Eigen::VectorXd::Ones(y.size());

    stratum.denominator_design = FrozenDesign::freeze(spec.denominator, views);
    Eigen::MatrixXd xd = stratum.denominator_design.build(views);
    stratum.denominator = fit_logistic(xd, y, w, stratum.denominator_design.column_names(), spec.fit);
    if (same_spec(spec.numerator, spec.denominator)) {
      stratum.numerator_design = stratum.denominator_design;
      stratum.numerator = stratum.denominator;
    } else {
      stratum.numerator_design = FrozenDesign::freeze(spec.numerator, views);
      Eigen::MatrixXd xn = stratum.numerator_design.build(views);
      stratum.numerator = fit_logistic(xn, y, w, stratum.numerator_design.column_names(), spec.fit);
    }
    for (const auto* fit : {&*stratum.numerator, &*stratum.denominator}) {
      for (const auto& msg : fit->warnings)
        models.warnings.push_back(to_string(process) + " model for " + stratum_label(stratum.regimen) + ": " + msg);
    }
    models.strata.push_back(std::move(stratum));
  }
  return models;
}

WeightModels fit_adherence_models(const CloneTable& clones, const WeightModelSpec& spec) {
  return fit_weight_models(clones, CensoringProcess::adherence, spec);
}

WeightTable compute_weights(const CloneTable& clones, const WeightModels& models) {
  const std::size_t n = clones.rows.size();
  WeightTable table;
  table.process = models.process;
  table.warnings = models.warnings;
  table.p_num.assign(n, kNaN);
  table.p_den.assign(n, kNaN);
  table.sw.assign(n, 1.0);

  auto records = weight_records(clones, models.process);
  std::map<const StratumFit*, std::vector<std::size_t>> by_stratum;
  for (const auto& rec : records) {
    const StratumFit* s = models.find(clones.rows[rec.row].regimen);
    if (!s) throw DataError("no weight model for " + row_label(clones, clones.rows[rec.row]));
    by_stratum[s].push_back(rec.row);
  }
  for (const auto& [stratum, rows] : by_stratum) {
    if (stratum->degenerate) {
      for (std::size_t r : rows) table.p_num[r] = table.p_den[r] = 1.0;
      continue;
    }
    std::vector<RowView> views;
    views.reserve(rows.size());
    for (std::size_t r : rows) views.push_back(row_view(clones, clones.rows[r]));
    Eigen::VectorXd pd = stratum->denominator->predict(stratum->denominator_design.build(views));
    Eigen::VectorXd pn = stratum->numerator->predict(stratum->numerator_design.build(views));
    for (std::size_t j = 0; j < rows.size(); ++j) {
      auto idx = static_cast<Eigen::Index>(j);
      if (pd[idx] < kPositivityFloor)
        throw PositivityError("fitted " + to_string(models.process) +
                              " probability is numerically zero for " + row_label(clones, clones.rows[rows[j]]));
      table.p_num[rows[j]] = pn[idx];
      table.p_den[rows[j]] = pd[idx];
    }
  }

  const bool inclusive = models.process == CensoringProcess::adherence;
  for (const auto& span : clone_spans(clones)) {
    double running = 1.0;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      double ratio = std::isnan(table.p_den[i]) ? 1.0 : table.p_num[i] / table.p_den[i];
      if (inclusive) {
        running *= ratio;
        table.sw[i] = running;
      } else {
        table.sw[i] = running;
        running *= ratio;
      }
    }
  }
  return table;
}

WeightTable compute_stabilized_weights(const CloneTable& clones, const WeightModels& models) {
  if (models.process != CensoringProcess::adherence)
    throw ConfigError("stabilized adherence weights need adherence models");
  return compute_weights(clones, models);
}

WeightTable compute_censoring_weights(const CloneTable& clones, CensoringProcess which,
                                      const WeightModelSpec& spec) {
  if (which == CensoringProcess::adherence) throw ConfigError("censoring weights need admin or ltfu");
  return compute_weights(clones, fit_weight_models(clones, which, spec));
}

WeightSummary summarize_weights(std::span<const double> values) {
  WeightSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  std::vector<double> v(values.begin(), values.end());
  s.mean = stats::mean(v);
  s.sd = stats::sd(v);
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  s.p01 = stats::quantile(v, 0.01);
  s.p25 = stats::quantile(v, 0.25);
  s.median = stats::quantile(v, 0.5);
  s.p75 = stats::quantile(v, 0.75);
  s.p99 = stats::quantile(v, 0.99);
  return s;
}

CombinedWeights combine_weights(const CloneTable& clones, std::span<const WeightTable> tables,
                                std::optional<std::pair<double, double>> truncation) {
  const std::size_t n = clones.rows.size();
  CombinedWeights out;
  out.w_total.assign(n, 1.0);
  for (const auto& t : tables) {
    if (t.sw.size() != n) throw DataError("weight table does not match the clone table");
    for (std::size_t i = 0; i < n; ++i) out.w_total[i] *= t.sw[i];
  }
  std::vector<double> analysed;
  for (std::size_t i = 0; i < n; ++i) {
    if (clones.rows[i].adherent) analysed.push_back(out.w_total[i]);
  }
  out.before = summarize_weights(analysed);
  if (truncation && !analysed.empty()) {
    double lo = stats::quantile(analysed, truncation->first);
    double hi = stats::quantile(analysed, truncation->second);
    out.bounds = std::make_pair(lo, hi);
    for (auto& w : out.w_total) w = std::clamp(w, lo, hi);
    analysed.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (clones.rows[i].adherent) analysed.push_back(out.w_total[i]);
    }
  }
  out.after = summarize_weights(analysed);
  return out;
}

void apply_weights(CloneTable& clones, std::span<const WeightTable> tables, const CombinedWeights& combined) {
  const std::size_t n = clones.rows.size();
  if (combined.w_total.size() != n) throw DataError("combined weights do not match the clone table");
  for (auto& r : clones.rows) r.sw_adherence = r.sw_admin = r.sw_ltfu = std::nullopt;
  for (const auto& t : tables) {
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = clones.rows[i];
      switch (t.process) {
        case CensoringProcess::adherence: r.sw_adherence = t.sw[i]; break;
        case CensoringProcess::admin: r.sw_admin = t.sw[i]; break;
        case CensoringProcess::ltfu: r.sw_ltfu = t.sw[i]; break;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) clones.rows[i].w_total = combined.w_total[i];
}

PositivityReport positivity_diagnostics(const WeightModels& models, const CloneTable& clones) {
  PositivityReport report;
  report.process = models.process;
  WeightTable table = compute_weights(clones, models);
  auto records = weight_records(clones, models.process);
  for (const auto& stratum : models.strata) {
    PositivityEntry e;
    e.regimen = stratum.regimen;
    e.min_p_den = std::numeric_limits<double>::infinity();
    e.max_p_den = -std::numeric_limits<double>::infinity();
    std::vector<double> sw;
    for (const auto& rec : records) {
      const auto& row = clones.rows[rec.row];
      if (stratum.regimen && row.regimen != *stratum.regimen) continue;
      double p = table.p_den[rec.row];
      ++e.records;
      e.min_p_den = std::min(e.min_p_den, p);
      e.max_p_den = std::max(e.max_p_den, p);
      if (p < 0.01) ++e.below_001;
      if (p > 0.99) ++e.above_099;
      sw.push_back(table.sw[rec.row]);
    }
    if (e.records == 0) continue;
    e.weights = summarize_weights(sw);
    report.entries.push_back(e);
  }
  return report;
}

void write_weight_audit(const CloneTable& clones, std::span<const WeightTable> tables,
                        const CombinedWeights& combined, std::ostream& out, char delim) {
  std::vector<std::string> header{"subject_id", "regimen_id", "t", "component", "p_num", "p_den", "sw"};
  csv::Writer w(out, delim);
  w.schema(header);
  auto num = [](double v) { return std::isnan(v) ? std::string() : csv::format_double(v); };
  for (std::size_t i = 0; i < clones.rows.size(); ++i) {
    const auto& r = clones.rows[i];
    for (const auto& t : tables) {
      w.row({clones.subject_ids[r.subject], std::to_string(r.regimen), std::to_string(r.t),
             to_string(t.process), num(t.p_num[i]), num(t.p_den[i]), num(t.sw[i])});
    }
    w.row({clones.subject_ids[r.subject], std::to_string(r.regimen), std::to_string(r.t), "total", "", "",
           num(combined.w_total[i])});
  }
}

void write_positivity(std::span<const PositivityReport> reports, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.schema({"component", "regimen_id", "records", "min_p_den", "max_p_den", "n_below_0.01", "n_above_0.99",
            "sw_mean", "sw_min", "sw_p01", "sw_median", "sw_p99", "sw_max"});
  for (const auto& report : reports) {
    for (const auto& e : report.entries) {
      w.row({to_string(report.process), e.regimen ? std::to_string(*e.regimen) : "pooled",
             std::to_string(e.records), csv::format_double(e.min_p_den), csv::format_double(e.max_p_den),
             std::to_string(e.below_001), std::to_string(e.above_099), csv::format_double(e.weights.mean),
             csv::format_double(e.weights.min), csv::format_double(e.weights.p01),
             csv::format_double(e.weights.median), csv::format_double(e.weights.p99),
             csv::format_double(e.weights.max)});
    }
  }
}

}  // namespace dtrclone

#include "dtrclone/logrank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/stats.hpp"

namespace dtrclone {

int PairedSurvival::max_time() const {
  int m = 0;
  for (const auto& p : pairs) m = std::max({m, p[0].x, p[1].x});
  return m;
}

void PairedSurvival::validate() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p[0].delta && p[1].delta && p[0].x != p[1].x)
      throw DataError("pair " + std::to_string(i) + " has clone deaths at different times");
    for (const auto& c : p) {
      if (c.x < 0) throw DataError("negative follow-up time in pair " + std::to_string(i));
      if (c.delta && c.x == 0) throw DataError("event at time 0 in pair " + std::to_string(i));
      if (!c.w.empty()) {
        if (c.w.size() < static_cast<std::size_t>(c.x))
          throw DataError("weight path shorter than follow-up in pair " + std::to_string(i));
        for (int s = 1; s <= c.x; ++s) {
          if (!(c.weight(s) > 0)) throw DataError("non-positive weight in pair " + std::to_string(i));
        }
      }
    }
  }
}

int grid_origin(const CloneTable& clones) {
  if (clones.rows.empty()) return clones.start_t;
  int origin = clones.rows.front().t;
  for (const auto& r : clones.rows) origin = std::min(origin, r.t);
  return origin;
}

PairedSurvival paired_survival(const CloneTable& clones, int regimen1, int regimen2, bool use_weights) {
  for (int id : {regimen1, regimen2}) {
    if (std::find(clones.regimen_ids.begin(), clones.regimen_ids.end(), id) == clones.regimen_ids.end())
      throw ConfigError("regimen " + std::to_string(id) + " is not in the clone table");
  }
  const int origin = grid_origin(clones);
  PairedSurvival data;
  data.pairs.resize(clones.n_subjects());
  for (const auto& span : clone_spans(clones)) {
    const auto& first = clones.rows[span.begin];
    int arm = first.regimen == regimen1 ? 0 : first.regimen == regimen2 ? 1 : -1;
    if (arm < 0) continue;
    ClonePath path;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      const auto& r = clones.rows[i];
      if (!r.adherent) break;
      path.x = r.t - origin + 1;
      path.delta = r.event;
      if (use_weights) {
        if (!r.w_total) throw DataError("missing w_total for subject " + clones.subject_ids[r.subject] +
                                        ", regimen " + std::to_string(r.regimen) + ", t " + std::to_string(r.t));
        path.w.push_back(*r.w_total);
      }
    }
    data.pairs[first.subject][static_cast<std::size_t>(arm)] = std::move(path);
  }
  return data;
}

WeightedProcess weighted_processes(const PairedSurvival& data, int arm) {
  const int m = data.max_time();
  WeightedProcess out;
  out.at_risk.assign(static_cast<std::size_t>(m), 0.0);
  out.deaths.assign(static_cast<std::size_t>(m), 0.0);
  for (const auto& p : data.pairs) {
    const ClonePath& c = p[static_cast<std::size_t>(arm)];
    for (int s = 1; s <= c.x; ++s) out.at_risk[static_cast<std::size_t>(s - 1)] += c.weight(s);
    if (c.delta) out.deaths[static_cast<std::size_t>(c.x - 1)] += c.weight(c.x);
  }
  return out;
}

NelsonPath weighted_nelson(const PairedSurvival& data, int arm) {
  WeightedProcess proc = weighted_processes(data, arm);
  NelsonPath out;
  double cum = 0.0;
  for (std::size_t j = 0; j < proc.at_risk.size(); ++j) {
    if (proc.at_risk[j] > 0) {
      cum += proc.deaths[j] / proc.at_risk[j];
    } else if (proc.deaths[j] > 0) {
      out.excluded_times.push_back(static_cast<int>(j) + 1);
    }
    out.cumulative_hazard.push_back(cum);
  }
  return out;
}

int tau(const PairedSurvival& data) {
  WeightedProcess a = weighted_processes(data, 0);
  WeightedProcess b = weighted_processes(data, 1);
  int t = 0;
  for (std::size_t j = 0; j < a.at_risk.size(); ++j) {
    if (a.at_risk[j] > 0 && b.at_risk[j] > 0) t = static_cast<int>(j) + 1;
  }
  if (t == 0) throw NumericalError("arms never share weighted at-risk mass; tau is undefined");
  return t;
}

namespace {

struct Grid {
  WeightedProcess arm[2];
  int tau = 0;
  bool usable(std::size_t j) const { return arm[0].at_risk[j] > 0 && arm[1].at_risk[j] > 0; }
};

Grid make_grid(const PairedSurvival& data) {
  Grid g{{weighted_processes(data, 0), weighted_processes(data, 1)}, tau(data)};
  return g;
}

}  // namespace

double wstar(const PairedSurvival& data) {
  if (data.n() == 0) throw NumericalError("log-rank statistic needs at least one subject");
  Grid g = make_grid(data);
  double sum = 0.0;
  double deaths = 0.0;
  for (std::size_t j = 0; j < static_cast<std::size_t>(g.tau); ++j) {
    if (!g.usable(j)) continue;
    double y1 = g.arm[0].at_risk[j], y2 = g.arm[1].at_risk[j];
    double d1 = g.arm[0].deaths[j], d2 = g.arm[1].deaths[j];
    deaths += d1 + d2;
    sum += d1 - y1 * (d1 + d2) / (y1 + y2);
  }
  if (deaths == 0.0) throw NumericalError("no events before tau; log-rank statistic undefined");
  return sum / std::sqrt(static_cast<double>(data.n()));
}

double variance_estimate(const PairedSurvival& data) {
  const std::size_t n = data.n();
  if (n < 2) throw NumericalError("variance estimate needs at least two subjects");
  Grid g = make_grid(data);
  const auto t = static_cast<std::size_t>(g.tau);
  // Per-time factor Y_other / (Y1 + Y2). Residuals are centred on the
  // pooled hazard increment, the null-hypothesis estimate; arm-specific
  // increments force each arm's residuals to sum to zero and understate the
  // variance in small samples.
  std::vector<double> factor[2], dlambda(t, 0.0);
  for (int k = 0; k < 2; ++k) factor[k].assign(t, 0.0);
  for (std::size_t j = 0; j < t; ++j) {
    if (!g.usable(j)) continue;
    double y1 = g.arm[0].at_risk[j], y2 = g.arm[1].at_risk[j];
    factor[0][j] = y2 / (y1 + y2);
    factor[1][j] = y1 / (y1 + y2);
    dlambda[j] = (g.arm[0].deaths[j] + g.arm[1].deaths[j]) / (y1 + y2);
  }
  double total = 0.0;
  for (const auto& p : data.pairs) {
    double e[2];
    for (int k = 0; k < 2; ++k) {
      const ClonePath& c = p[static_cast<std::size_t>(k)];
      double v = 0.0;
      int last = std::min(c.x, g.tau);
      for (int s = 1; s <= last; ++s) {
        auto j = static_cast<std::size_t>(s - 1);
        double w = c.weight(s);
        double dn = (c.delta && s == c.x) ? w : 0.0;
        v += factor[k][j] * (dn - w * dlambda[j]);
      }
      e[k] = v;
    }
    double diff = e[0] - e[1];
    total += diff * diff;
  }
  return total / static_cast<double>(n);
}

LogRankResult logrank_test(const PairedSurvival& data) {
  data.validate();
  LogRankResult r;
  r.n = data.n();
  r.tau = tau(data);
  r.wstar = wstar(data);
  r.sigma2_hat = variance_estimate(data);
  constexpr double kZeroVariance = 1e-20;
  if (r.sigma2_hat <= kZeroVariance) {
    if (std::fabs(r.wstar) > 1e-10)
      throw NumericalError("log-rank variance is zero while the statistic is not");
    r.degenerate = true;
    r.z = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.z = r.wstar / std::sqrt(r.sigma2_hat);
  r.p_value = stats::two_sided_p(r.z);
  return r;
}

void write_logrank_result(const LogRankResult& result, int regimen1, int regimen2, std::ostream& out,
                          char delim) {
  csv::Writer w(out, delim);
  w.schema({"name", "value"});
  w.row({"regimen_1", std::to_string(regimen1)});
  w.row({"regimen_2", std::to_string(regimen2)});
  w.row({"n", std::to_string(result.n)});
  w.row({"tau", std::to_string(result.tau)});
  w.row({"wstar", csv::format_double(result.wstar)});
  w.row({"sigma2_hat", csv::format_double(result.sigma2_hat)});
  w.row({"z", csv::format_double(result.z)});
  w.row({"p_value", csv::format_double(result.p_value)});
  w.row({"degenerate", result.degenerate ? "1" : "0"});
}

void write_nelson_paths(const PairedSurvival& data, int regimen1, int regimen2, int origin, std::ostream& out,
                        char delim) {
  csv::Writer w(out, delim);
  w.schema({"time", "regimen_id", "at_risk_w", "deaths_w", "cumhaz"});
  for (int k = 0; k < 2; ++k) {
    WeightedProcess proc = weighted_processes(data, k);
    NelsonPath path = weighted_nelson(data, k);
    for (std::size_t j = 0; j < proc.at_risk.size(); ++j) {
      w.row({std::to_string(origin + static_cast<int>(j) + 1), std::to_string(k == 0 ? regimen1 : regimen2),
             csv::format_double(proc.at_risk[j]), csv::format_double(proc.deaths[j]),
             csv::format_double(path.cumulative_hazard[j])});
    }
  }
}

}  // namespace dtrclone

#pragma once

// Independent reference implementations used to cross-check the library.
// Each one is written from the textbook definition and shares no code with
// the module it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dtrclone/cohort.hpp"
#include "dtrclone/regimen.hpp"

namespace oracle {

// Adherence of one transition, judged on the dose ratio.
inline bool ratio_adherent(const dtrclone::RegimenSpec& spec, double prev, double marker, double dose) {
  double lo, hi;
  bool increase = false;
  if (marker > spec.b2) {
    lo = spec.p[0];
    hi = spec.p[1];
  } else if (marker < spec.b1) {
    lo = spec.p[4];
    hi = spec.p[5];
    increase = true;
  } else {
    lo = spec.p[2];
    hi = spec.p[3];
  }
  if (prev == 0.0) return increase ? dose > 0.0 : dose == 0.0;
  double r = dose / prev;
  return r >= lo - 1e-9 && (std::isinf(hi) || r <= hi + 1e-9);
}

struct ScanResult {
  int last_t = 0;                  // last visit examined
  std::optional<int> censor_visit;
};

// Month-by-month scan: looks visits up by index, carries the most recent
// recorded marker, stops at the first month without a visit.
inline ScanResult brute_force_scan(const dtrclone::RegimenSpec& spec, const dtrclone::SubjectHistory& s,
                                   int start_t) {
  auto at = [&](int t) -> const dtrclone::Visit* {
    for (const auto& v : s.visits) {
      if (v.t == t) return &v;
    }
    return nullptr;
  };
  auto carried_marker = [&](int t) -> std::optional<double> {
    std::optional<double> m;
    for (const auto& v : s.visits) {
      if (v.t <= t && v.marker) m = v.marker;
    }
    return m;
  };
  ScanResult out;
  out.last_t = start_t;
  for (int t = start_t + 1;; ++t) {
    const auto* cur = at(t);
    const auto* prev = at(t - 1);
    if (!cur || !prev) break;
    out.last_t = t;
    auto m = carried_marker(t);
    bool ok = m && cur->dose && prev->dose && ratio_adherent(spec, *prev->dose, *m, *cur->dose);
    if (!ok) {
      out.censor_visit = t;
      break;
    }
  }
  return out;
}

struct TwoSample {
  std::vector<int> time;  // discrete follow-up, at risk at s while time >= s
  std::vector<bool> event;
  std::vector<int> group;  // 0 or 1
};

struct ClassicalLogRank {
  double o_minus_e = 0.0;  // group 0
  double variance = 0.0;   // hypergeometric
};

inline ClassicalLogRank classical_logrank(const TwoSample& d) {
  ClassicalLogRank out;
  int tmax = 0;
  for (int t : d.time) tmax = std::max(tmax, t);
  for (int s = 1; s <= tmax; ++s) {
    double n[2] = {0, 0}, dd[2] = {0, 0};
    for (std::size_t i = 0; i < d.time.size(); ++i) {
      if (d.time[i] >= s) n[d.group[i]] += 1;
      if (d.time[i] == s && d.event[i]) dd[d.group[i]] += 1;
    }
    double N = n[0] + n[1], D = dd[0] + dd[1];
    if (n[0] == 0 || n[1] == 0 || D == 0) continue;
    out.o_minus_e += dd[0] - n[0] * D / N;
    if (N > 1) out.variance += n[0] * n[1] * D * (N - D) / (N * N * (N - 1));
  }
  return out;
}

// Cox partial likelihood for one binary covariate with Newton-Raphson;
// continuous times, Breslow handling of any ties.
inline double cox_binary(const std::vector<double>& time, const std::vector<bool>& event,
                         const std::vector<int>& x) {
  std::vector<std::size_t> order(time.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] > time[b]; });
  double beta = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    double eb = std::exp(beta);
    double s0 = 0, s1 = 0, grad = 0, info = 0;
    std::size_t i = 0;
    while (i < order.size()) {
      // group of tied times, added to the risk set before their deaths count
      std::size_t j = i;
      double deaths = 0, death_x = 0;
      while (j < order.size() && time[order[j]] == time[order[i]]) {
        std::size_t k = order[j];
        s0 += x[k] ? eb : 1.0;
        s1 += x[k] ? eb : 0.0;
        if (event[k]) {
          deaths += 1;
          death_x += x[k];
        }
        ++j;
      }
      if (deaths > 0) {
        double m = s1 / s0;
        grad += death_x - deaths * m;
        info += deaths * (m - m * m);
      }
      i = j;
    }
    double step = grad / info;
    beta += step;
    if (std::fabs(step) < 1e-12) break;
  }
  return beta;
}

// Stabilized weight per row as a plain product loop. `counted` marks the
// rows whose ratio enters the product; `inclusive` says whether the current
// row's own ratio is included.
inline std::vector<double> naive_weights(const dtrclone::CloneTable& clones, const std::vector<double>& p_num,
                                         const std::vector<double>& p_den, const std::vector<bool>& counted,
                                         bool inclusive) {
  std::vector<double> sw(clones.rows.size(), 1.0);
  for (std::size_t i = 0; i < clones.rows.size(); ++i) {
    const auto& r = clones.rows[i];
    double w = 1.0;
    for (std::size_t j = 0; j < clones.rows.size(); ++j) {
      const auto& q = clones.rows[j];
      if (q.subject != r.subject || q.regimen != r.regimen || !counted[j]) continue;
      if (q.t < r.t || (inclusive && q.t == r.t)) w *= p_num[j] / p_den[j];
    }
    sw[i] = w;
  }
  return sw;
}

// Person-time rows per regimen: adherent clone rows.
inline std::map<int, std::size_t> person_time_counts(const dtrclone::CloneTable& clones) {
  std::map<int, std::size_t> out;
  for (const auto& r : clones.rows) {
    if (!r.censored) ++out[r.regimen];
  }
  return out;
}

// Random subject with doses on a 0.25 grid so ratios never sit within
// rounding distance of a bound without hitting it exactly.
inline dtrclone::SubjectHistory random_subject(std::mt19937_64& rng, const std::string& id, int months,
                                               double p_missing = 0.05) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> marker10(240, 440);
  dtrclone::SubjectHistory s;
  s.id = id;
  double dose = 4.0 + std::floor(u(rng) * 40) * 0.25;
  for (int t = 0; t < months; ++t) {
    if (t > 0 && u(rng) < 0.03) continue;  // occasional gap
    dtrclone::Visit v;
    v.t = t;
    if (u(rng) > p_missing) v.marker = marker10(rng) / 10.0;
    double r = u(rng);
    if (r < 0.45) {
      // unchanged
    } else if (r < 0.6) {
      dose = dose * 1.25;
    } else if (r < 0.75) {
      dose = dose * 0.75;
    } else if (r < 0.8) {
      dose = 0.0;
    } else {
      dose = std::floor(u(rng) * 80) * 0.25;
    }
    dose = std::round(dose * 16.0) / 16.0;
    if (u(rng) > p_missing) v.dose = dose;
    s.visits.push_back(v);
  }
  s.last_followup = s.visits.back().t;
  return s;
}

// Grouped binomial cells (regimen, time, at risk, events) fitted with
// intercept, time indicators and regimen indicators against `ref` by plain
// Newton iterations. Returns the regimen log odds ratios (0 for ref).
struct Cell {
  int regimen = 0;
  int t = 0;
  double n = 0.0;
  double d = 0.0;
};

inline std::vector<double> grouped_logistic(const std::vector<Cell>& cells, int K, int H, int ref) {
  const int p = H + K - 1;
  auto row = [&](const Cell& c) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
    x[0] = 1.0;
    if (c.t > 0) x[c.t] = 1.0;
    if (c.regimen != ref) x[H + (c.regimen < ref ? c.regimen : c.regimen - 1)] = 1.0;
    return x;
  };
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    for (const auto& c : cells) {
      if (c.n <= 0) continue;
      Eigen::VectorXd x = row(c);
      double mu = 1.0 / (1.0 + std::exp(-x.dot(beta)));
      g += (c.d - c.n * mu) * x;
      info += c.n * mu * (1 - mu) * x * x.transpose();
    }
    Eigen::VectorXd step = info.ldlt().solve(g);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  std::vector<double> out(static_cast<std::size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    if (k != ref) out[static_cast<std::size_t>(k)] = beta[H + (k < ref ? k : k - 1)];
  }
  return out;
}

}  // namespace oracle

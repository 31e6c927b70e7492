#include <doctest.h>

#include <cmath>
#include <random>

#include "dtrclone/error.hpp"
#include "dtrclone/stats.hpp"
#include "dtrclone/weights.hpp"
#include "oracles.hpp"

using namespace dtrclone;

namespace {

// Appends clone rows directly, bypassing the regimen engine.
struct TableBuilder {
  CloneTable table;

  explicit TableBuilder(std::vector<int> regimens, int start_t = 0, int horizon = 10) {
    table.regimen_ids = std::move(regimens);
    table.start_t = start_t;
    table.horizon = horizon;
  }
  std::size_t subject(double v) {
    BaselineCovariates b;
    b.extra["V"] = v;
    table.subject_ids.push_back("s" + std::to_string(table.subject_ids.size()));
    table.baselines.push_back(b);
    return table.subject_ids.size() - 1;
  }
  void row(std::size_t s, int regimen, int t, bool adherent = true, bool event = false, double marker = 33.0) {
    CloneRow r;
    r.subject = s;
    r.regimen = regimen;
    r.t = t;
    r.adherent = adherent;
    r.censored = !adherent;
    r.event = event;
    r.marker = marker;
    r.prev_marker = marker;
    r.prev_dose = 1.0;
    r.dose = 1.0;
    table.rows.push_back(r);
  }
};

FittedGlm fixed_glm(std::vector<double> coef) {
  FittedGlm g;
  g.coefficients = Eigen::Map<Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  g.converged = true;
  return g;
}

// Models with hand-set coefficients on the given design.
WeightModels fixed_models(const CloneTable& table, CensoringProcess process, const std::vector<std::string>& terms,
                          std::vector<double> num, std::vector<double> den) {
  std::vector<RowView> views;
  for (const auto& rec : weight_records(table, process)) views.push_back(row_view(table, table.rows[rec.row]));
  StratumFit s;
  s.numerator_design = FrozenDesign::freeze(DesignSpec::parse(terms), views);
  s.denominator_design = s.numerator_design;
  s.numerator = fixed_glm(std::move(num));
  s.denominator = fixed_glm(std::move(den));
  s.records = views.size();
  WeightModels m;
  m.process = process;
  m.strata.push_back(std::move(s));
  return m;
}

WeightModelSpec spec_of(const std::vector<std::string>& num, const std::vector<std::string>& den) {
  WeightModelSpec s;
  s.numerator = DesignSpec::parse(num);
  s.denominator = DesignSpec::parse(den);
  return s;
}

// Clones that stay adherent each visit with probability p(V, marker).
template <class P>
TableBuilder adherence_sim(std::mt19937_64& rng, int n, int months, P prob) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TableBuilder b({0}, 0, months);
  for (int i = 0; i < n; ++i) {
    double v = z(rng);
    auto s = b.subject(v);
    double marker = 33.0 + 2.0 * z(rng);
    for (int t = 0; t <= months; ++t) {
      bool a = t == 0 || u(rng) < prob(v, marker);
      b.row(s, 0, t, a, false, marker);
      if (!a) break;
      marker = 33.0 + 0.6 * (marker - 33.0) + 1.5 * v + 1.2 * z(rng);
    }
  }
  return b;
}

}  // namespace

TEST_SUITE("weights") {
  TEST_CASE("two-visit arithmetic") {
    TableBuilder b({0});
    auto s = b.subject(0.0);
    for (int t = 0; t <= 2; ++t) b.row(s, 0, t);
    auto models = fixed_models(b.table, CensoringProcess::adherence, {"time_indicators"},
                               {stats::logit(0.9), stats::logit(0.8)}, {stats::logit(0.95), stats::logit(0.7)});
    auto w = compute_stabilized_weights(b.table, models);
    CHECK(w.sw[0] == 1.0);
    CHECK(w.sw[1] == doctest::Approx(0.94737).epsilon(1e-5));
    CHECK(w.sw[2] == doctest::Approx(1.08271).epsilon(1e-5));
    CHECK(w.sw[2] == doctest::Approx(0.9 / 0.95 * 0.8 / 0.7).epsilon(1e-14));
  }

  TEST_CASE("equal numerator and denominator probabilities give unit weights") {
    std::mt19937_64 rng(1);
    auto b = adherence_sim(rng, 300, 6, [](double v, double) { return stats::expit(2.0 + 0.5 * v); });
    auto models = fixed_models(b.table, CensoringProcess::adherence, {"intercept", "extra:V"}, {2.0, 0.5}, {2.0, 0.5});
    for (double w : compute_weights(b.table, models).sw) CHECK(w == 1.0);
    // identical fitted specs as well
    auto spec = spec_of({"intercept", "time", "extra:V"}, {"intercept", "time", "extra:V"});
    auto fitted = compute_weights(b.table, fit_adherence_models(b.table, spec));
    for (double w : fitted.sw) CHECK(std::fabs(w - 1.0) < 1e-12);
  }

  TEST_CASE("cumulative products match a naive loop") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(0.0, 1.0);
    auto b = adherence_sim(rng, 200, 8, [](double v, double m) { return stats::expit(1.5 + 0.4 * v - 0.1 * (m - 33)); });
    for (auto process : {CensoringProcess::adherence, CensoringProcess::admin, CensoringProcess::ltfu}) {
      std::vector<double> num{z(rng), 0.3 * z(rng)}, den{z(rng), 0.3 * z(rng)};
      auto models = fixed_models(b.table, process, {"intercept", "extra:V"}, num, den);
      auto w = compute_weights(b.table, models);
      std::vector<bool> counted(b.table.rows.size(), false);
      for (const auto& rec : weight_records(b.table, process)) counted[rec.row] = true;
      auto ref = oracle::naive_weights(b.table, w.p_num, w.p_den, counted, process == CensoringProcess::adherence);
      double worst = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::fabs(w.sw[i] - ref[i]) / ref[i]);
      CHECK(worst < 1e-12);
      // multiplicative over time within a clone
      for (std::size_t i = 1; i < w.sw.size(); ++i) {
        const auto& r = b.table.rows[i];
        if (r.subject != b.table.rows[i - 1].subject) continue;
        std::size_t k = process == CensoringProcess::adherence ? i : i - 1;
        double ratio = counted[k] ? w.p_num[k] / w.p_den[k] : 1.0;
        CHECK(w.sw[i] == doctest::Approx(w.sw[i - 1] * ratio).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("covariate-free adherence gives probabilities near the rate and weights near one") {
    std::mt19937_64 rng(3);
    auto b = adherence_sim(rng, 5000, 6, [](double, double) { return 0.8; });
    auto spec = spec_of({"intercept"}, {"intercept", "extra:V", "marker"});
    auto models = fit_adherence_models(b.table, spec);
    auto w = compute_weights(b.table, models);
    double sum_num = 0, sum_den = 0, worst = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < w.sw.size(); ++i) {
      if (std::isnan(w.p_den[i])) continue;
      sum_num += w.p_num[i];
      sum_den += w.p_den[i];
      ++n;
      if (b.table.rows[i].adherent) worst = std::max(worst, std::fabs(w.sw[i] - 1.0));
    }
    CHECK(sum_num / n == doctest::Approx(0.8).epsilon(0.0125));
    CHECK(sum_den / n == doctest::Approx(0.8).epsilon(0.0125));
    CHECK(worst < 0.15);
  }

  TEST_CASE("a perfectly predictive denominator covariate surfaces a separation error") {
    TableBuilder b({0});
    for (int i = 0; i < 60; ++i) {
      auto s = b.subject(i % 2 ? 1.0 : -1.0);
      b.row(s, 0, 0);
      b.row(s, 0, 1, i % 2 == 1);
    }
    CHECK_THROWS_AS(fit_adherence_models(b.table, spec_of({"intercept"}, {"intercept", "extra:V"})), SeparationError);
  }

  TEST_CASE("per-stratum intercepts equal the logit of each stratum's rate") {
    TableBuilder b({0, 1});
    for (int i = 0; i < 100; ++i) {
      auto s = b.subject(0.0);
      b.row(s, 0, 0);
      b.row(s, 0, 1, i % 10 != 0);  // 0.9
      b.row(s, 1, 0);
      b.row(s, 1, 1, i % 4 != 0);   // 0.75
    }
    auto models = fit_adherence_models(b.table, spec_of({"intercept"}, {"intercept"}));
    REQUIRE(models.strata.size() == 2);
    CHECK(models.find(0)->denominator->coefficients[0] == doctest::Approx(stats::logit(0.9)).epsilon(1e-9));
    CHECK(models.find(1)->denominator->coefficients[0] == doctest::Approx(stats::logit(0.75)).epsilon(1e-9));
  }

  TEST_CASE("a stratum without nonadherence falls back to unit weights with a warning") {
    TableBuilder b({0, 1});
    for (int i = 0; i < 50; ++i) {
      auto s = b.subject(0.1 * i);
      b.row(s, 0, 0);
      b.row(s, 0, 1, i % 3 != 0);
      b.row(s, 1, 0);
      b.row(s, 1, 1);
    }
    auto models = fit_adherence_models(b.table, spec_of({"intercept"}, {"intercept", "extra:V"}));
    CHECK(models.find(1)->degenerate);
    CHECK_FALSE(models.warnings.empty());
    auto w = compute_weights(b.table, models);
    for (std::size_t i = 0; i < w.sw.size(); ++i) {
      if (b.table.rows[i].regimen == 1) CHECK(w.sw[i] == 1.0);
    }
  }

  TEST_CASE("no loss to follow-up gives unit ltfu weights, horizon-only admin gives unit admin weights") {
    TableBuilder b({0}, 0, 4);
    for (int i = 0; i < 30; ++i) {
      auto s = b.subject(0.0);
      int stop = i % 3 == 0 ? 2 : 4;
      for (int t = 0; t <= stop; ++t) b.row(s, 0, t, true, t == stop && stop < 4);
    }
    auto spec = spec_of({"intercept"}, {"intercept"});
    for (auto which : {CensoringProcess::ltfu, CensoringProcess::admin}) {
      auto w = compute_censoring_weights(b.table, which, spec);
      for (double v : w.sw) CHECK(v == 1.0);
    }
    CHECK_THROWS_AS(compute_censoring_weights(b.table, CensoringProcess::adherence, spec), ConfigError);
  }

  TEST_CASE("loss-to-follow-up weights restore the full-data survival curve") {
    // Dropout depends on V. Run once with an outcome unrelated to V and once
    // with an outcome that shares V, where the unweighted curve is biased.
    for (double outcome_v : {0.0, 0.8}) {
      std::mt19937_64 rng(outcome_v == 0.0 ? 4 : 5);
      std::normal_distribution<double> z(0.0, 1.0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const int H = 8;
      TableBuilder b({0}, 0, H);
      std::vector<int> full_event_t;
      for (int i = 0; i < 20000; ++i) {
        double v = z(rng);
        auto s = b.subject(v);
        double h = stats::expit(-3.0 + outcome_v * v), d = stats::expit(-2.2 + 1.0 * v);
        int death = -1;
        for (int t = 0; t <= H && death < 0; ++t) {
          if (u(rng) < h) death = t;
        }
        full_event_t.push_back(death);
        int drop = -1;
        for (int t = 0; t < H && drop < 0; ++t) {
          if (u(rng) < d) drop = t;
        }
        for (int t = 0; t <= H; ++t) {
          bool ev = t == death;
          b.row(s, 0, t, true, ev);
          if (ev || t == drop) break;
        }
      }
      auto spec = spec_of({"intercept", "time_indicators"}, {"intercept", "time_indicators", "extra:V"});
      auto w = compute_censoring_weights(b.table, CensoringProcess::ltfu, spec);
      auto km = [&](bool weighted) {
        double surv = 1.0;
        for (int t = 0; t <= H; ++t) {
          double at_risk = 0, deaths = 0;
          for (std::size_t i = 0; i < b.table.rows.size(); ++i) {
            const auto& r = b.table.rows[i];
            if (r.t != t) continue;
            double wt = weighted ? w.sw[i] : 1.0;
            at_risk += wt;
            deaths += r.event ? wt : 0.0;
          }
          surv *= 1.0 - deaths / at_risk;
        }
        return surv;
      };
      double full = 1.0;
      for (int t = 0; t <= H; ++t) {
        double at_risk = 0, deaths = 0;
        for (int e : full_event_t) {
          if (e < 0 || e >= t) at_risk += 1;
          if (e == t) deaths += 1;
        }
        full *= 1.0 - deaths / at_risk;
      }
      CHECK(std::fabs(km(true) - full) < 0.015);
      if (outcome_v > 0) CHECK(km(false) - full > 0.02);
    }
  }

  TEST_CASE("component product") {
    TableBuilder b({0});
    b.row(b.subject(0.0), 0, 0);
    std::vector<WeightTable> tables(3);
    double comps[] = {1.1, 0.9, 1.0};
    CensoringProcess kinds[] = {CensoringProcess::adherence, CensoringProcess::admin, CensoringProcess::ltfu};
    for (int k = 0; k < 3; ++k) {
      tables[k].process = kinds[k];
      tables[k].sw = {comps[k]};
    }
    auto c = combine_weights(b.table, tables);
    CHECK(c.w_total[0] == doctest::Approx(0.99).epsilon(1e-15));
    apply_weights(b.table, tables, c);
    CHECK(*b.table.rows[0].sw_admin == 0.9);
    CHECK(*b.table.rows[0].w_total == c.w_total[0]);
  }

  TEST_CASE("truncation replaces an extreme weight by the upper percentile") {
    TableBuilder b({0});
    WeightTable t;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.8, 1.2);
    for (int i = 0; i < 500; ++i) {
      b.row(b.subject(0.0), 0, 0);
      t.sw.push_back(u(rng));
    }
    t.sw[17] = 250.0;
    std::vector<double> pre = t.sw;
    std::vector<WeightTable> tables{t};
    auto c = combine_weights(b.table, tables, std::make_pair(0.01, 0.99));
    double p99 = stats::quantile(pre, 0.99), p01 = stats::quantile(pre, 0.01);
    CHECK(c.w_total[17] == p99);
    CHECK(*std::max_element(c.w_total.begin(), c.w_total.end()) == p99);
    CHECK(*std::min_element(c.w_total.begin(), c.w_total.end()) == p01);
    CHECK(c.before.max == 250.0);
    CHECK(c.after.max == p99);
  }

  TEST_CASE("stabilized weights average about one under history-dependent adherence") {
    std::mt19937_64 rng(7);
    auto b = adherence_sim(rng, 5000, 8, [](double v, double m) {
      return stats::expit(2.0 + 0.3 * v - 0.35 * (m - 33.0));
    });
    auto spec = spec_of({"intercept", "time", "extra:V"}, {"intercept", "time", "extra:V", "marker"});
    auto w = compute_weights(b.table, fit_adherence_models(b.table, spec));
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < w.sw.size(); ++i) {
      if (!b.table.rows[i].adherent) continue;
      sum += w.sw[i];
      ++n;
    }
    CHECK(std::fabs(sum / n - 1.0) < 0.05);
  }

  TEST_CASE("positivity diagnostics") {
    std::mt19937_64 rng(8);
    auto good = adherence_sim(rng, 3000, 5, [](double v, double) { return stats::expit(2.0 + 0.3 * v); });
    auto spec = spec_of({"intercept"}, {"intercept", "extra:V"});
    auto models = fit_adherence_models(good.table, spec);
    auto report = positivity_diagnostics(models, good.table);
    REQUIRE(report.entries.size() == 1);
    CHECK(report.entries[0].min_p_den > 0.01);
    CHECK(report.entries[0].below_001 == 0);

    // a covariate region where adherence is nearly impossible
    auto bad = adherence_sim(rng, 4000, 5, [](double v, double) { return stats::expit(1.0 - 3.0 * v); });
    auto bad_report = positivity_diagnostics(fit_adherence_models(bad.table, spec), bad.table);
    CHECK(bad_report.entries[0].below_001 > 0);

    // a regimen with only start rows has no records and no entry
    auto mixed = good;
    mixed.table.regimen_ids.push_back(1);
    mixed.row(0, 1, 0);
    auto mixed_report = positivity_diagnostics(fit_adherence_models(mixed.table, spec), mixed.table);
    CHECK(mixed_report.entries.size() == 1);
    CHECK(*mixed_report.entries[0].regimen == 0);
  }

  TEST_CASE("numerically zero denominator probability is a positivity error") {
    TableBuilder b({0});
    auto s = b.subject(1.0);
    b.row(s, 0, 0);
    b.row(s, 0, 1);
    auto models = fixed_models(b.table, CensoringProcess::adherence, {"intercept"}, {0.0}, {-40.0});
    CHECK_THROWS_AS(compute_weights(b.table, models), PositivityError);
  }

  TEST_CASE("weight model specs are checked") {
    CHECK_THROWS_AS(spec_of({"intercept", "marker"}, {"intercept", "marker"}).validate(), ConfigError);
    CHECK_THROWS_AS(spec_of({"intercept", "age"}, {"intercept", "marker"}).validate(), ConfigError);
    CHECK_NOTHROW(spec_of({"intercept", "time_spline"}, {"intercept", "time_spline", "marker"}).validate());
    CHECK(parse_process("ltfu") == CensoringProcess::ltfu);
    CHECK_THROWS_AS(parse_process("other"), ConfigError);
  }
}

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dtrclone/error.hpp"
#include "dtrclone/regimen.hpp"
#include "oracles.hpp"

using namespace dtrclone;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RegimenSpec fig2_spec() {
  RegimenSpec s;
  s.p = {0, 0.75, 0.75, 1.25, 1.25, kInf};
  s.b1 = 30;
  s.b2 = 36;
  return s;
}

SubjectHistory series(const std::string& id, const std::vector<double>& markers, const std::vector<double>& doses) {
  SubjectHistory s;
  s.id = id;
  for (std::size_t t = 0; t < markers.size(); ++t) {
    s.visits.push_back({static_cast<int>(t), markers[t], doses[t], {}});
  }
  s.last_followup = static_cast<int>(markers.size()) - 1;
  return s;
}

}  // namespace

TEST_SUITE("regimen") {
  TEST_CASE("allowable interval by marker zone") {
    auto spec = fig2_spec();
    auto in = allowable_dose_interval(spec, 10, 33);
    CHECK(in.lo == doctest::Approx(7.5));
    CHECK(in.hi == doctest::Approx(12.5));
    auto above = allowable_dose_interval(spec, 10, 38);
    CHECK(above.lo == 0.0);
    CHECK(above.hi == doctest::Approx(7.5));
    auto below = allowable_dose_interval(spec, 10, 28);
    CHECK(below.lo == doctest::Approx(12.5));
    CHECK(std::isinf(below.hi));
  }

  TEST_CASE("target range is closed and the outer zones are strict") {
    auto spec = fig2_spec();
    CHECK(spec.zone(30.0) == Zone::within);
    CHECK(spec.zone(36.0) == Zone::within);
    CHECK(spec.zone(36.0001) == Zone::above);
    CHECK(spec.zone(29.9999) == Zone::below);
  }

  TEST_CASE("adherence decisions") {
    auto spec = fig2_spec();
    CHECK(is_adherent(spec, 10, 33, 12));
    CHECK_FALSE(is_adherent(spec, 10, 38, 10));
    // interval endpoints are inclusive
    CHECK(is_adherent(spec, 10, 33, 12.5));
    CHECK(is_adherent(spec, 10, 33, 7.5));
    CHECK(is_adherent(spec, 10, 38, 7.5));
    // stopping therapy is the strongest decrease
    CHECK(is_adherent(spec, 10, 38, 0));
    // zero previous dose
    CHECK_FALSE(is_adherent(spec, 0, 28, 0));
    CHECK(is_adherent(spec, 0, 28, 5));
    CHECK(is_adherent(spec, 0, 33, 0));
    CHECK_FALSE(is_adherent(spec, 0, 33, 1));
    CHECK(is_adherent(spec, 0, 38, 0));
  }

  TEST_CASE("family construction") {
    auto g = usrds_family(0.25, 33);
    CHECK(g.label == "G(0.25,30,36)");
    CHECK(g.p[0] == 0.0);
    CHECK(g.p[1] == 0.75);
    CHECK(g.p[2] == 0.75);
    CHECK(g.p[3] == 1.25);
    CHECK(g.p[4] == 1.25);
    CHECK(std::isinf(g.p[5]));
    auto g10 = usrds_family(0.10, 33);
    CHECK(g10.p[1] == doctest::Approx(0.90));
    CHECK(g10.p[4] == doctest::Approx(1.10));
    auto g50 = usrds_family(0.50, 40);
    CHECK(g50.b1 == 37.0);
    CHECK(g50.b2 == 43.0);
    CHECK_THROWS_AS(usrds_family(1.5, 33), ConfigError);
  }

  TEST_CASE("spec and grid validation") {
    auto spec = fig2_spec();
    CHECK(spec.validate().empty());
    spec.p[2] = 1.1;
    spec.p[3] = 1.3;
    CHECK(spec.validate().size() == 1);
    spec.b1 = 40;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    RegimenGrid grid;
    grid.specs = {usrds_family(0.25, 33, 0), usrds_family(0.25, 34, 0)};
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    grid.specs[1].id = 1;
    grid.reference_id = 5;
    CHECK_THROWS_AS(grid.validate(), ConfigError);
    auto fam = family_grid({0.10, 0.25}, {33, 34}, "G(0.25,31,37)");
    CHECK(fam.specs.size() == 4);
    CHECK(fam.reference_id == 3);
  }

  TEST_CASE("fully adherent subject is never censored") {
    auto s = series("a", {33, 34, 31, 35, 33, 32}, {10, 11, 12, 10, 8, 9});
    auto trace = adherence_trace(fig2_spec(), s, 0);
    CHECK(trace.t.size() == 6);
    CHECK_FALSE(trace.censor_visit.has_value());
  }

  TEST_CASE("maintained dose above target censors at that month") {
    auto s = series("a", {33, 34, 38, 35}, {10, 10, 10, 10});
    auto trace = adherence_trace(fig2_spec(), s, 0);
    REQUIRE(trace.censor_visit.has_value());
    CHECK(*trace.censor_visit == 2);
    CHECK(trace.adherent[0]);
    CHECK_FALSE(trace.adherent[2]);
  }

  TEST_CASE("the start visit is unconstrained") {
    auto s = series("a", {33, 45, 45}, {10, 50, 30});
    auto trace = adherence_trace(fig2_spec(), s, 1);
    CHECK(trace.adherent[0]);
    CHECK_FALSE(trace.censor_visit.has_value());
  }

  TEST_CASE("missing dose is nonadherent and a visit gap ends the trace") {
    auto s = series("a", {33, 33, 33}, {10, 10, 10});
    s.visits[2].dose.reset();
    CHECK(*adherence_trace(fig2_spec(), s, 0).censor_visit == 2);
    auto g = series("b", {33, 33, 33, 33}, {10, 10, 10, 10});
    g.visits.erase(g.visits.begin() + 2);
    auto trace = adherence_trace(fig2_spec(), g, 0);
    CHECK(trace.t.size() == 2);
    CHECK_FALSE(trace.censor_visit.has_value());
  }

  TEST_CASE("missing marker carries forward unless configured to censor") {
    auto s = series("a", {38, 33, 33}, {10, 7, 7});
    s.visits[1].marker.reset();
    // carried 38 sits above target, so the cut to 7 adheres
    CHECK_FALSE(adherence_trace(fig2_spec(), s, 0).censor_visit.has_value());
    TraceOptions strict;
    strict.censor_on_missing_marker = true;
    CHECK(*adherence_trace(fig2_spec(), s, 0, strict).censor_visit == 1);
  }

  TEST_CASE("adherence trace agrees with a brute-force scan on random subjects") {
    std::mt19937_64 rng(2024);
    RegimenGrid grid = family_grid({0.10, 0.25, 0.50}, {31, 33, 36, 39}, "G(0.25,30,36)");
    std::size_t mismatches = 0, censored = 0;
    for (int i = 0; i < 1500; ++i) {
      auto s = oracle::random_subject(rng, std::to_string(i), 14);
      for (const auto& spec : grid.specs) {
        if (!s.visit_at(2)) continue;
        auto trace = adherence_trace(spec, s, 2);
        auto ref = oracle::brute_force_scan(spec, s, 2);
        if (trace.censor_visit != ref.censor_visit) ++mismatches;
        if (!ref.censor_visit && trace.t.back() != ref.last_t) ++mismatches;
        if (ref.censor_visit) ++censored;
      }
    }
    CHECK(mismatches == 0);
    CHECK(censored > 1000);
  }

  TEST_CASE("single always-adherent regimen gives the person-time table") {
    Cohort c;
    c.subjects = {series("a", {33, 33, 33}, {10, 10, 10}), series("b", {33, 33, 33, 33}, {5, 5, 5, 5})};
    c.subjects[1].event_time = 3.5;
    c.subjects[1].event_observed = true;
    c.visit_horizon = 3;
    RegimenGrid grid;
    grid.specs = {fig2_spec()};
    auto table = clone_cohort(c, grid, 0);
    CHECK(table.rows.size() == 7);
    CHECK(table.rows.back().event);
    CHECK(table.rows.back().t == 3);
    for (const auto& r : table.rows) CHECK_FALSE(r.censored);
  }

  TEST_CASE("disjoint rules leave coadherence only at the start") {
    RegimenSpec up, down;
    up.id = 0;
    up.p = {1.5, kInf, 1.5, kInf, 1.5, kInf};
    down.id = 1;
    down.p = {0, 0.5, 0, 0.5, 0, 0.5};
    RegimenGrid grid;
    grid.specs = {up, down};
    std::mt19937_64 rng(9);
    Cohort c;
    for (int i = 0; c.subjects.size() < 200; ++i) {
      // a zero previous dose makes both rules accept a zero dose
      auto s = oracle::random_subject(rng, std::to_string(i), 8, 0.0);
      bool zero = std::any_of(s.visits.begin(), s.visits.end(), [](const Visit& v) { return *v.dose == 0.0; });
      if (!zero) c.subjects.push_back(s);
    }
    for (auto& s : c.subjects) c.visit_horizon = std::max(c.visit_horizon, s.last_followup);
    auto table = clone_cohort(c, grid, 0);
    std::map<std::pair<std::size_t, int>, int> adherent_by_subject_t;
    for (const auto& r : table.rows) {
      if (r.adherent) ++adherent_by_subject_t[{r.subject, r.t}];
    }
    for (const auto& [key, n] : adherent_by_subject_t) {
      if (key.second > 0) CHECK(n <= 1);
    }
  }

  TEST_CASE("two-target subject has the expected coadherent span") {
    // Inside both targets through month 7, between 36 and 39 through 11,
    // above 39 at 12.
    std::vector<double> m, d;
    for (int t = 0; t <= 12; ++t) {
      m.push_back(t <= 7 ? 34.0 : (t <= 11 ? 37.0 : 40.0));
      d.push_back(10.0);
    }
    Cohort c;
    c.subjects = {series("fig2", m, d)};
    c.visit_horizon = 12;
    RegimenGrid grid;
    grid.specs = {usrds_family(0.25, 33, 1), usrds_family(0.25, 36, 2)};
    grid.reference_id = 1;
    auto table = clone_cohort(c, grid, 3);
    std::map<int, int> censor_at;
    std::map<int, std::vector<int>> adherent_months;
    for (const auto& r : table.rows) {
      if (r.censored) censor_at[r.regimen] = r.t;
      if (r.adherent) adherent_months[r.regimen].push_back(r.t);
    }
    CHECK(censor_at[1] == 8);
    CHECK(censor_at[2] == 12);
    std::vector<int> both;
    for (int t : adherent_months[1]) {
      if (std::find(adherent_months[2].begin(), adherent_months[2].end(), t) != adherent_months[2].end())
        both.push_back(t);
    }
    CHECK(both == std::vector<int>{3, 4, 5, 6, 7});
    // the brute-force scan agrees on both clones
    CHECK(*oracle::brute_force_scan(grid.specs[0], c.subjects[0], 3).censor_visit == 8);
    CHECK(*oracle::brute_force_scan(grid.specs[1], c.subjects[0], 3).censor_visit == 12);
  }

  TEST_CASE("clone table invariants on a random cohort") {
    std::mt19937_64 rng(77);
    std::exponential_distribution<double> ex(0.08);
    Cohort c;
    for (int i = 0; i < 400; ++i) {
      auto s = oracle::random_subject(rng, "s" + std::to_string(i), 12);
      double et = ex(rng);
      if (et < s.last_followup + 1) {
        // death in (t, t + 1]: keep visits up to t
        s.event_time = et;
        s.event_observed = true;
        while (s.visits.size() > 1 && s.visits.back().t >= et) s.visits.pop_back();
        s.last_followup = s.visits.back().t;
      }
      c.subjects.push_back(s);
    }
    c.visit_horizon = 11;
    RegimenGrid grid = family_grid({0.25}, {31, 33, 35, 37}, "G(0.25,30,36)");
    auto table = clone_cohort(c, grid, 2);

    std::size_t person_months = 0;
    for (const auto& s : c.subjects) {
      for (const auto& v : s.visits) person_months += v.t >= 2 ? 1 : 0;
    }
    CHECK(table.rows.size() <= grid.specs.size() * person_months);

    std::map<std::size_t, std::optional<int>> event_t;
    for (const auto& span : clone_spans(table)) {
      bool seen_censor = false;
      int prev_t = table.rows[span.begin].t - 1;
      for (std::size_t i = span.begin; i < span.end; ++i) {
        const auto& r = table.rows[i];
        CHECK(r.t == prev_t + 1);
        prev_t = r.t;
        CHECK(r.censored == !r.adherent);
        CHECK_FALSE(seen_censor);
        seen_censor = r.censored;
        if (r.event) CHECK(i + 1 == span.end);
      }
      const auto& last = table.rows[span.end - 1];
      const auto& subject = c.subjects[std::stoul(table.subject_ids[last.subject].substr(1))];
      auto ref = oracle::brute_force_scan(grid.by_id(last.regimen), subject, 2);
      if (last.censored) CHECK(ref.censor_visit == last.t);
      if (last.event) {
        // clones reaching the event agree on its time
        auto& e = event_t[last.subject];
        if (e) CHECK(*e == last.t);
        e = last.t;
      }
    }
  }

  TEST_CASE("zone-wise nesting of allowable sets") {
    for (double p : {0.1, 0.25, 0.4}) {
      auto loose = usrds_family(p, 33), tight = usrds_family(p + 0.2, 33);
      for (double ratio = 0.0; ratio <= 3.0; ratio += 0.01) {
        double dose = 10 * ratio;
        if (is_adherent(tight, 10, 38, dose)) CHECK(is_adherent(loose, 10, 38, dose));
        if (is_adherent(tight, 10, 27, dose)) CHECK(is_adherent(loose, 10, 27, dose));
      }
    }
  }

  TEST_CASE("clone table export round-trips") {
    Cohort c;
    c.subjects = {series("a", {33, 38, 33}, {10, 10, 10}), series("b", {28, 33, 33}, {5, 7, 7})};
    c.subjects[0].baseline.extra["V"] = 0.5;
    c.subjects[1].baseline.extra["V"] = -1.25;
    c.visit_horizon = 2;
    RegimenGrid grid = family_grid({0.25}, {33, 35}, "G(0.25,30,36)");
    auto table = clone_cohort(c, grid, 0);
    table.rows[0].w_total = 1.5;
    std::stringstream buf;
    write_clone_table(table, buf);
    auto back = read_clone_table(buf);
    REQUIRE(back.rows.size() == table.rows.size());
    CHECK(back.subject_ids == table.subject_ids);
    CHECK(back.baselines == table.baselines);
    CHECK(back.regimen_ids == table.regimen_ids);
    CHECK(back.start_t == table.start_t);
    CHECK(back.horizon == table.horizon);
    CHECK(*back.rows[0].w_total == 1.5);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      CHECK(back.rows[i].t == table.rows[i].t);
      CHECK(back.rows[i].censored == table.rows[i].censored);
      CHECK(back.rows[i].regimen == table.rows[i].regimen);
    }
  }
}

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dtrclone/cohort.hpp"
#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"

using namespace dtrclone;

namespace {

CohortSchema minimal_schema() {
  CohortSchema s;
  s.sex = s.age = s.race = s.diabetes = s.hypertension = "";
  return s;
}

IngestResult ingest_text(const std::string& visits, const std::string* outcomes = nullptr,
                         CohortSchema schema = minimal_schema()) {
  std::istringstream v(visits);
  if (!outcomes) return ingest_cohort(v, schema);
  std::istringstream o(*outcomes);
  return ingest_cohort(v, schema, &o);
}

std::string emit_visits(const Cohort& c) {
  std::ostringstream out;
  emit_cohort(c, out);
  return out.str();
}

SubjectHistory subject_with_event(double et) {
  SubjectHistory s;
  s.id = "a";
  s.event_time = et;
  s.event_observed = true;
  return s;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("two rows for one subject give one subject with two visits") {
    auto r = ingest_text("subject_id,t,marker,dose\n1,0,33,2\n1,1,34,2\n");
    REQUIRE(r.cohort.subjects.size() == 1);
    CHECK(r.cohort.subjects[0].visits.size() == 2);
    CHECK(r.rejected.empty());
  }

  TEST_CASE("duplicated subject and visit is a data error naming both") {
    std::string text = "subject_id,t,marker,dose\n7,2,33,1\n7,3,33,1\n7,3,34,1\n";
    try {
      ingest_text(text);
      FAIL("expected a data error");
    } catch (const DataError& e) {
      std::string msg = e.what();
      CHECK(msg.find("7") != std::string::npos);
      CHECK(msg.find("t 3") != std::string::npos);
      CHECK(msg.find("duplicate") != std::string::npos);
    }
  }

  TEST_CASE("out of order visits are rejected") {
    CHECK_THROWS_AS(ingest_text("subject_id,t,marker,dose\n1,2,33,1\n1,1,33,1\n"), DataError);
  }

  TEST_CASE("missing required column is a schema error") {
    CHECK_THROWS_AS(ingest_text("subject_id,t,marker\n1,0,33\n"), SchemaError);
  }

  TEST_CASE("unparseable fields are rejected with their line") {
    auto r = ingest_text("subject_id,t,marker,dose\n1,0,33,1\n1,1,abc,1\n1,2,33,-4\n");
    REQUIRE(r.rejected.size() == 2);
    CHECK(r.rejected[0].line == 3);
    CHECK(r.rejected[1].line == 4);
    CHECK(r.cohort.subjects[0].visits.size() == 1);
  }

  TEST_CASE("canonical file round-trips byte for byte") {
    // Generated 5 subjects x 10 visits in canonical form.
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> marker(250, 420), dose(0, 40), age(30, 80), coin(0, 1), race(0, 2);
    const char* races[] = {"white", "black", "other"};
    std::ostringstream text;
    text << "# columns: subject_id,t,marker,dose,sex,age,race,diabetes,hypertension\n";
    text << "subject_id,t,marker,dose,sex,age,race,diabetes,hypertension\n";
    for (int i = 0; i < 5; ++i) {
      int a = age(rng), s = coin(rng), r = race(rng), d = coin(rng), h = coin(rng);
      for (int t = 0; t < 10; ++t) {
        std::string m = (t == 4 && i == 2) ? "" : csv::format_double(marker(rng) / 10.0);
        text << "p" << i << "," << t << "," << m << "," << csv::format_double(dose(rng) / 4.0) << "," << s << ","
             << a << "," << races[r] << "," << d << "," << h << "\n";
      }
    }
    auto r = ingest_text(text.str(), nullptr, CohortSchema{});
    CHECK(r.rejected.empty());
    CHECK(r.cohort.subjects.size() == 5);
    CHECK(emit_visits(r.cohort) == text.str());
    // ingest . emit . ingest is idempotent
    auto again = ingest_text(emit_visits(r.cohort), nullptr, CohortSchema{});
    CHECK(again.cohort.subjects == r.cohort.subjects);
  }

  TEST_CASE("outcomes attach event times and follow-up") {
    std::string outcomes = "subject_id,event_time,event_observed,last_followup\n1,1.5,1,1\n";
    auto r = ingest_text("subject_id,t,marker,dose\n1,0,33,1\n1,1,33,1\n2,0,30,1\n", &outcomes);
    REQUIRE(r.cohort.subjects.size() == 2);
    CHECK(r.cohort.subjects[0].event_observed);
    CHECK(*r.cohort.subjects[0].event_time == doctest::Approx(1.5));
    CHECK_FALSE(r.cohort.subjects[1].event_observed);
    CHECK(r.cohort.subjects[1].last_followup == 0);
    CHECK(r.cohort.visit_horizon == 1);
  }

  TEST_CASE("event indicator uses the right-closed interval") {
    auto s = subject_with_event(3.4);
    CHECK(event_indicator(s, 3));
    CHECK_FALSE(event_indicator(s, 2));
    CHECK(event_indicator(subject_with_event(4.0), 3));
    CHECK_FALSE(event_indicator(subject_with_event(4.0), 4));
    s.event_observed = false;
    CHECK_FALSE(event_indicator(s, 3));
  }

  TEST_CASE("event indicator sums to one exactly when the event is observed") {
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> ex(0.2);
    for (int i = 0; i < 500; ++i) {
      SubjectHistory s;
      s.event_time = ex(rng) + 1e-9;
      s.event_observed = i % 3 != 0;
      int total = 0;
      for (int t = 0; t < 200; ++t) total += event_indicator(s, t) ? 1 : 0;
      CHECK(total == (s.event_observed && *s.event_time <= 200 ? 1 : 0));
    }
  }

  TEST_CASE("markers are carried forward and flagged") {
    SubjectHistory s;
    s.visits = {{0, 30.0, 1.0, {}}, {1, std::nullopt, 1.0, {}}, {2, 34.0, 1.0, {}}};
    auto m = resolve_markers(s);
    CHECK(*m[1].value == 30.0);
    CHECK(m[1].carried);
    CHECK_FALSE(m[2].carried);
    auto avg = resolve_markers(s, MarkerSource::two_month_average);
    CHECK(*avg[2].value == doctest::Approx(32.0));
    CHECK(*avg[1].value == doctest::Approx(30.0));
  }

  TEST_CASE("dose change buckets") {
    auto profile_of = [](double from, double to) {
      Cohort c;
      SubjectHistory s;
      s.id = "x";
      s.visits = {{0, 33.0, from, {}}, {1, 33.0, to, {}}};
      c.subjects.push_back(s);
      return dose_change_profile(c, 0.25, {30, 36});
    };
    auto up = profile_of(10, 14);
    CHECK(up.bins[0].increased == 1);
    CHECK(*up.bins[0].p_increased == 1.0);
    auto same = profile_of(10, 10);
    CHECK(same.bins[0].maintained == 1);
    auto zero = profile_of(0, 4);
    CHECK(zero.ineligible_pairs == 1);
    CHECK_FALSE(zero.bins[0].p_maintained.has_value());
  }

  TEST_CASE("constructed counts give exact proportions that sum to one") {
    Cohort c;
    // 10 pairs in [30,36): 3 rise by 30%, 2 fall by 40%, 5 stay.
    for (int i = 0; i < 10; ++i) {
      SubjectHistory s;
      s.id = std::to_string(i);
      double next = i < 3 ? 13.0 : (i < 5 ? 6.0 : 10.5);
      s.visits = {{0, 32.0, 10.0, {}}, {1, 33.0, next, {}}};
      c.subjects.push_back(s);
    }
    auto p = dose_change_profile(c, 0.25, {20, 30, 36, 50});
    const auto& bin = p.bins[1];
    CHECK(bin.eligible == 10);
    CHECK(*bin.p_increased == 0.3);
    CHECK(*bin.p_decreased == 0.2);
    CHECK(*bin.p_maintained == 0.5);
    CHECK(*bin.p_increased + *bin.p_decreased + *bin.p_maintained == 1.0);
    CHECK_FALSE(p.bins[0].p_increased.has_value());
    CHECK_FALSE(p.bins[2].p_increased.has_value());
  }

  TEST_CASE("cohort summary arithmetic") {
    Cohort c;
    for (double a : {40.0, 60.0}) {
      SubjectHistory s;
      s.id = std::to_string(a);
      s.baseline.age = a;
      s.baseline.male = true;
      s.visits = {{0, 33.0, 1.0, {}}};
      c.subjects.push_back(s);
    }
    auto sum = summarize_cohort(c);
    const SummaryRow* age = nullptr;
    for (const auto& r : sum.rows) {
      if (r.characteristic == "Age (years)") age = &r;
    }
    REQUIRE(age);
    CHECK(*age->cells[0].value == doctest::Approx(50.0));
    CHECK(*age->cells[0].sd == doctest::Approx(14.142).epsilon(1e-4));
    // all male: the female column is empty
    CHECK(sum.rows[0].cells[2].count == 0);
    CHECK(age->cells[2].count == 0);
    CHECK_FALSE(age->cells[2].value.has_value());
  }

  TEST_CASE("summary mean of a generated cohort is within 3 SE of the generator mean") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> age(62.0, 15.0);
    Cohort c;
    for (int i = 0; i < 1000; ++i) {
      SubjectHistory s;
      s.id = std::to_string(i);
      s.baseline.age = std::max(0.0, age(rng));
      s.visits = {{0, 33.0, 1.0, {}}};
      c.subjects.push_back(s);
    }
    auto sum = summarize_cohort(c);
    for (const auto& r : sum.rows) {
      if (r.characteristic != "Age (years)") continue;
      CHECK(std::fabs(*r.cells[0].value - 62.0) < 3 * 15.0 / std::sqrt(1000.0));
    }
  }

  TEST_CASE("structural validation") {
    SubjectHistory s;
    s.id = "v";
    s.visits = {{0, 33.0, 1.0, {}}, {2, 33.0, 1.0, {}}};
    s.last_followup = 2;
    CHECK_NOTHROW(validate(s));
    s.last_followup = 1;
    CHECK_THROWS_AS(validate(s), DataError);
    s.last_followup = 2;
    s.event_observed = true;
    CHECK_THROWS_AS(validate(s), DataError);
  }
}

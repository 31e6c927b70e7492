#include "dtrclone/synth_cohort.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dtrclone {

Cohort synth_cohort(const SynthCohortConfig& config) {
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto bernoulli = [&](double p) { return unif(rng) < p; };

  std::vector<SubjectHistory> subjects;
  subjects.reserve(static_cast<std::size_t>(config.n));
  for (int i = 0; i < config.n; ++i) {
    SubjectHistory s;
    s.id = "P" + std::to_string(i + 1);
    auto& b = s.baseline;
    b.male = bernoulli(0.513);
    b.age = std::clamp(66.7 + 14.4 * std_normal(rng), 18.0, 100.0);
    double r = unif(rng);
    b.race = r < 0.632 ? Race::white : r < 0.966 ? Race::black : Race::other;
    b.diabetes = bernoulli(0.632);
    b.hypertension = bernoulli(0.835);

    double frailty = std_normal(rng);
    double x = config.target_lo + (config.target_hi - config.target_lo) * unif(rng);
    double lo = x - 3.0, hi = x + 3.0;
    double equilibrium = std::exp(0.3 * frailty);
    double marker = x - 1.0 + 2.0 * std_normal(rng) - 0.8 * frailty;
    double dose = equilibrium * std::exp(0.3 * std_normal(rng));
    double risk = std::log(config.base_hazard) + 0.02 * (b.age - 66.7) + 0.2 * (b.diabetes ? 1 : 0) +
                  config.frailty_effect * frailty;

    for (int t = 0; t <= config.months; ++t) {
      if (t > 0) {
        // Dose chosen at this visit from the current marker.
        double factor;
        if (bernoulli(config.deviation_prob)) {
          factor = std::exp(0.5 * std_normal(rng));
        } else if (marker > hi) {
          factor = 1.0 - config.p - 0.3 * unif(rng);
        } else if (marker < lo) {
          factor = 1.0 + config.p + 0.4 * unif(rng);
        } else {
          factor = 0.8 + 0.4 * unif(rng);
        }
        dose = std::clamp(dose * factor, 0.05, 20.0);
      }
      s.visits.push_back({t, marker, dose, {}});

      double h = std::exp(risk - config.marker_effect * (std::min(marker, config.plateau) - 33.0));
      if (bernoulli(-std::expm1(-h))) {
        s.event_time = t + unif(rng);
        s.event_observed = true;
        break;
      }
      if (t == config.months) break;
      if (bernoulli(config.ltfu)) break;
      marker += config.dose_response * std::log(dose / equilibrium) + config.marker_noise * std_normal(rng);
      marker = std::clamp(marker, 15.0, 50.0);
    }
    s.last_followup = s.visits.back().t;
    subjects.push_back(std::move(s));
  }
  Cohort cohort = make_cohort(std::move(subjects));
  cohort.visit_horizon = config.months;
  return cohort;
}

RegimenGrid usrds_grid() {
  std::vector<double> xs;
  for (int x = 31; x <= 40; ++x) xs.push_back(x);
  return family_grid({0.25}, xs, family_label(0.25, 30, 36));
}

}  // namespace dtrclone

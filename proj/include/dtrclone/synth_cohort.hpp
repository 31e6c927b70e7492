#pragma once

#include <cstdint>

#include "dtrclone/cohort.hpp"
#include "dtrclone/regimen.hpp"

namespace dtrclone {

// Synthetic dialysis-like cohort. Each subject doses by a personal
// G(p, x - 3, x + 3) rule with occasional deviations; the marker responds
// to dose; the monthly hazard falls with the marker up to `plateau` and is
// flat above it. A frailty term raises both the hazard and the dose needed
// to hold the marker, so adherence is confounded by the marker history.
struct SynthCohortConfig {
  int n = 12000;
  int months = 12;  // last visit
  double p = 0.25;
  double target_lo = 29.5;
  double target_hi = 41.5;
  double plateau = 33.0;
  double marker_effect = 0.35;  // log-hazard decrease per marker unit below the plateau
  double base_hazard = 0.02;
  double frailty_effect = 0.5;
  double dose_response = 1.5;  // marker change per unit log dose ratio
  double marker_noise = 1.2;
  double deviation_prob = 0.08;
  double ltfu = 0.01;
  std::uint64_t seed = 7;
};

Cohort synth_cohort(const SynthCohortConfig& config = {});

// G(0.25, x - 3, x + 3), x = 31..40, reference G(0.25, 30, 36).
RegimenGrid usrds_grid();

}  // namespace dtrclone

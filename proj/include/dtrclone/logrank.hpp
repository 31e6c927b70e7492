#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "dtrclone/regimen.hpp"

namespace dtrclone {

// One clone's follow-up on the discrete grid s = 1, 2, ...: at risk at s
// while x >= s; an event at x = s happened in (s - 1, s].
struct ClonePath {
  int x = 0;
  bool delta = false;
  std::vector<double> w;  // w[s - 1] is the weight at s; empty means unit weights

  double weight(int s) const { return w.empty() ? 1.0 : w[static_cast<std::size_t>(s - 1)]; }
};

struct PairedSurvival {
  std::vector<std::array<ClonePath, 2>> pairs;

  std::size_t n() const { return pairs.size(); }
  int max_time() const;
  // Throws DataError when both clones of a subject die at different times
  // or a weight path is too short or not positive.
  void validate() const;
};

// Pairs the clones of every subject for two regimens. The grid starts at
// the table's first row time; a regimen without a clone for a subject gives
// x = 0. Weight paths use w_total when present and use_weights is set.
PairedSurvival paired_survival(const CloneTable& clones, int regimen1, int regimen2, bool use_weights = true);

struct WeightedProcess {
  std::vector<double> at_risk;  // index s - 1
  std::vector<double> deaths;
};

WeightedProcess weighted_processes(const PairedSurvival& data, int arm);

struct NelsonPath {
  std::vector<double> cumulative_hazard;  // index s - 1
  std::vector<int> excluded_times;        // deaths with no weighted mass at risk
};

NelsonPath weighted_nelson(const PairedSurvival& data, int arm);

// Largest s with positive weighted at-risk mass in both arms; throws
// NumericalError when there is none.
int tau(const PairedSurvival& data);

double wstar(const PairedSurvival& data);
// (1/n) sum_i (e_i1 - e_i2)^2 with e_ik the subject's influence contribution
// to arm k, residuals taken against the pooled weighted hazard.
double variance_estimate(const PairedSurvival& data);

struct LogRankResult {
  double wstar = 0.0;
  double sigma2_hat = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  int tau = 0;
  std::size_t n = 0;
  bool degenerate = false;
};

LogRankResult logrank_test(const PairedSurvival& data);

void write_logrank_result(const LogRankResult& result, int regimen1, int regimen2, std::ostream& out,
                          char delim = ',');
// Weighted Nelson paths of both arms; time is reported on the visit scale
// as origin + s.
void write_nelson_paths(const PairedSurvival& data, int regimen1, int regimen2, int origin, std::ostream& out,
                        char delim = ',');

int grid_origin(const CloneTable& clones);

}  // namespace dtrclone

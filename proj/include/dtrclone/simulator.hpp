#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "dtrclone/cohort.hpp"
#include "dtrclone/regimen.hpp"

namespace dtrclone {

enum class BiasLevel { none, moderate, severe };

std::string to_string(BiasLevel level);
BiasLevel parse_bias_level(const std::string& text);

struct SimConfig {
  int K = 6;
  int n_k = 500;
  std::vector<double> target_hr{0.80, 0.91, 1.00, 1.17, 1.28, 1.40};
  int ref_regimen = 2;  // 0-based
  // q[native][target]: per-visit probability of staying coadherent.
  std::vector<std::vector<double>> coadherence;
  BiasLevel bias_level = BiasLevel::none;
  double gamma_moderate = 0.5;
  double gamma_severe = 2.0;
  // Target regimens (0-based) whose coadherence depends on V.
  std::vector<int> biased_targets{3, 4};
  // Log-hazard effect of V.
  double theta = 0.9;
  double v_mean = 0.0;
  double v_sd = 1.0;
  double lambda_ref = 0.05;
  int horizon = 10;
  int replications = 200;
  std::uint64_t seed = 20140601;
  // With marginal_truth the raw-data hazard ratio functional is matched to
  // target_hr; otherwise rates are lambda_ref * target_hr before cloning.
  bool marginal_truth = true;
  // 0-based comparisons reported against the reference.
  std::vector<int> comparisons{1, 3, 4};

  double gamma() const;
  // Throws ConfigError on violated invariants.
  void validate() const;
};

// Default neighbour coadherence design for K = 6.
std::vector<std::vector<double>> default_coadherence();
// Desk-scale configuration for a scenario.
SimConfig scenario_config(BiasLevel level);

struct Calibration {
  std::vector<double> lambda;
  // Rates of the raw data whose hazard ratio functional the clones match.
  std::vector<double> raw_lambda;
  // Relative difference between the cloned-data and raw-data hazard ratio
  // functionals per regimen at the returned rates.
  std::vector<double> residual;
  int iterations = 0;
};

// Large-sample limit of the factor-form MSM log hazard ratios (time
// indicators, no covariates) computed from expected cell counts, with V
// integrated by Gauss-Hermite quadrature. With cloned = false only native
// clones enter; gamma is the coadherence shift used.
std::vector<double> limit_log_hr(const SimConfig& config, const std::vector<double>& lambda, bool cloned,
                                 double gamma = 0.0);

// Rates whose cloned-data limit (without selection bias) matches the raw
// hazard ratio functional at the raw rates: lambda_ref * target_hr, or with
// marginal_truth the rates whose raw functional equals target_hr. Throws
// NumericalError when the iteration leaves the rate bounds or fails to
// converge.
Calibration calibrate_rates(const SimConfig& config);

// Adjusts the free coadherence entries so that the calibrated rates equal
// the raw rates (cloning then leaves the complete-data hazard ratios
// unchanged). Each free entry is q[native][target] for a target in the
// reported comparisons. Returns the largest relative rate mismatch left.
struct FreeCoadherence {
  int native = 0;
  int target = 0;
};
double balance_coadherence(SimConfig& config, const std::vector<FreeCoadherence>& free);
// Free entries of the default design.
std::vector<FreeCoadherence> default_free_coadherence();

struct SimSubject {
  int native = 0;
  double v = 0.0;
  double event_time = 0.0;  // continuous T on the visit scale
};

SimSubject generate_subject(std::mt19937_64& rng, int native, const std::vector<double>& lambda,
                            const SimConfig& config);

// Number of intervals t = 0..H-1 survived before death or the horizon, and
// whether the death falls inside the horizon.
int event_row(const SimSubject& subject, int horizon);
bool event_within(const SimSubject& subject, int horizon);

// Adherence indicators A(t), t = 0, 1, ... for each regimen. The native
// regimen is adherent through the event row; other regimens draw per visit
// until the first failure, which is the last entry.
std::vector<std::vector<bool>> simulate_coadherence(std::mt19937_64& rng, const SimSubject& subject,
                                                    const SimConfig& config);

// Clone table of one simulated cohort: rows t = 0..H-1 with start_t = -1,
// baseline extra "V". Clones with zero coadherence probability are omitted.
struct SimCohort {
  std::vector<SimSubject> subjects;
  std::vector<std::vector<std::vector<bool>>> adherence;
  CloneTable clones;
};

SimCohort simulate_cohort(std::mt19937_64& rng, const std::vector<double>& lambda, const SimConfig& config);

enum class SimAnalysis { complete_data, clones_unweighted, clones_weighted };
std::string to_string(SimAnalysis analysis);

struct SimEstimate {
  std::size_t replication = 0;
  SimAnalysis analysis = SimAnalysis::complete_data;
  int regimen = 0;  // 0-based, compared with the reference
  double log_hr = 0.0;
  double se = 0.0;
};

std::mt19937_64 replication_rng(std::uint64_t seed, std::size_t index);

// Estimates for every reported comparison under the three analyses.
std::vector<SimEstimate> run_replication(std::size_t index, const std::vector<double>& lambda,
                                         const SimConfig& config);

struct SimSummaryRow {
  int regimen = 0;
  SimAnalysis analysis = SimAnalysis::complete_data;
  double true_hr = 1.0;
  double median_hr = 1.0;
  double ese_log = 0.0;
  double ase_log = 0.0;
  double ese = 0.0;  // HR scale: ese_log * median_hr
  double ase = 0.0;
  double ecp = 0.0;  // percent
  std::size_t replications = 0;
};

struct SimSummary {
  std::vector<SimSummaryRow> rows;
  std::size_t replications = 0;

  const SimSummaryRow& find(int regimen, SimAnalysis analysis) const;
};

// truth[k] is the hazard ratio of regimen k against the reference.
SimSummary summarize(const std::vector<SimEstimate>& estimates, const std::vector<double>& truth);

struct SimStudy {
  SimConfig config;
  Calibration calibration;
  std::vector<SimEstimate> estimates;  // replication order
  SimSummary summary;
};

// Runs every replication on up to `threads` workers; results are merged in
// replication order.
SimStudy run_study(const SimConfig& config, unsigned threads = 1);

void write_estimates(const std::vector<SimEstimate>& estimates, std::ostream& out, char delim = ',');
std::vector<SimEstimate> read_estimates(std::istream& in, char delim = ',');
void write_summary(const SimSummary& summary, std::ostream& out, char delim = ',');
// One line per comparison with complete-data, unweighted and
// weighted blocks.
void write_comparison_table(const SimSummary& summary, const SimConfig& config, std::ostream& out, char delim = ',');
void write_calibration(const Calibration& calibration, const SimConfig& config, std::ostream& out,
                       char delim = ',');

// Regimens used to materialize simulated clones: G(0.25, x-3, x+3) with
// x = 31, 32, ... in regimen order.
RegimenGrid simulation_grid(int K, int ref = 2);

// Marker and dose series that make the regimen module reproduce a clone's
// adherence: visit 0 is a pre-period, simulated time t maps to visit t + 1.
SubjectHistory materialize_clone(const SimSubject& subject, const std::vector<bool>& adherence,
                                 const RegimenSpec& regimen, const std::string& id, int horizon);

}  // namespace dtrclone

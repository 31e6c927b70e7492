#include "dtrclone/simulator.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <ostream>
#include <thread>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/glm.hpp"
#include "dtrclone/msm.hpp"
#include "dtrclone/stats.hpp"
#include "dtrclone/weights.hpp"

namespace dtrclone {

std::string to_string(BiasLevel level) {
  switch (level) {
    case BiasLevel::none: return "none";
    case BiasLevel::moderate: return "moderate";
    case BiasLevel::severe: return "severe";
  }
  return "none";
}

BiasLevel parse_bias_level(const std::string& text) {
  if (text == "none") return BiasLevel::none;
  if (text == "moderate") return BiasLevel::moderate;
  if (text == "severe") return BiasLevel::severe;
  throw ConfigError("unknown bias level '" + text + "'");
}

std::string to_string(SimAnalysis analysis) {
  switch (analysis) {
    case SimAnalysis::complete_data: return "complete_data";
    case SimAnalysis::clones_unweighted: return "clones_unweighted";
    case SimAnalysis::clones_weighted: return "clones_weighted";
  }
  return "complete_data";
}

namespace {

SimAnalysis parse_analysis(const std::string& text) {
  for (auto a : {SimAnalysis::complete_data, SimAnalysis::clones_unweighted, SimAnalysis::clones_weighted}) {
    if (to_string(a) == text) return a;
  }
  throw DataError("unknown analysis '" + text + "'");
}

}  // namespace

double SimConfig::gamma() const {
  switch (bias_level) {
    case BiasLevel::none: return 0.0;
    case BiasLevel::moderate: return gamma_moderate;
    case BiasLevel::severe: return gamma_severe;
  }
  return 0.0;
}

void SimConfig::validate() const {
  if (K < 2) throw ConfigError("simulation needs at least two regimens");
  if (n_k <= 0) throw ConfigError("n_k must be positive");
  if (static_cast<int>(target_hr.size()) != K) throw ConfigError("target_hr needs one entry per regimen");
  if (ref_regimen < 0 || ref_regimen >= K) throw ConfigError("reference regimen out of range");
  if (std::fabs(target_hr[static_cast<std::size_t>(ref_regimen)] - 1.0) > 1e-12)
    throw ConfigError("target_hr of the reference regimen must be 1");
  for (double hr : target_hr) {
    if (!(hr > 0)) throw ConfigError("target hazard ratios must be positive");
  }
  if (static_cast<int>(coadherence.size()) != K) throw ConfigError("coadherence must be a K x K matrix");
  for (int i = 0; i < K; ++i) {
    const auto& row = coadherence[static_cast<std::size_t>(i)];
    if (static_cast<int>(row.size()) != K) throw ConfigError("coadherence must be a K x K matrix");
    for (int j = 0; j < K; ++j) {
      double q = row[static_cast<std::size_t>(j)];
      if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("coadherence probabilities must lie in [0, 1]");
      if (i == j && q != 1.0) throw ConfigError("coadherence of a regimen with itself must be 1");
    }
  }
  if (horizon < 1) throw ConfigError("horizon must be at least one visit");
  if (replications < 1) throw ConfigError("need at least one replication");
  if (!(lambda_ref > 0)) throw ConfigError("lambda_ref must be positive");
  if (!(v_sd >= 0)) throw ConfigError("v_sd must be nonnegative");
  for (int k : biased_targets) {
    if (k < 0 || k >= K) throw ConfigError("biased target out of range");
  }
  for (int k : comparisons) {
    if (k < 0 || k >= K || k == ref_regimen) throw ConfigError("comparison regimen out of range");
  }
}

std::vector<std::vector<double>> default_coadherence() {
  std::vector<std::vector<double>> q(6, std::vector<double>(6, 0.0));
  for (int k = 0; k < 6; ++k) q[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = 1.0;
  // q[native][target], 0-based. The second inflow of each target is set by
  // balance_coadherence for the default theta, horizon and rates.
  q[1][2] = 0.85;
  q[3][2] = 0.72;
  q[4][3] = 0.85;
  q[2][3] = 0.723790411;
  q[2][1] = 0.80;
  q[0][1] = 0.658071825;
  q[3][4] = 0.80;
  q[5][4] = 0.7295613967;
  return q;
}

SimConfig scenario_config(BiasLevel level) {
  SimConfig c;
  c.coadherence = default_coadherence();
  c.bias_level = level;
  return c;
}

namespace {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Hermite rule for the standard normal density (Golub-Welsch).
const Quadrature& normal_quadrature() {
  static const Quadrature rule = [] {
    constexpr int n = 40;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = std::sqrt(static_cast<double>(i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(j);
    Quadrature q;
    for (int i = 0; i < n; ++i) {
      q.nodes.push_back(eig.eigenvalues()[i]);
      double v = eig.eigenvectors()(0, i);
      q.weights.push_back(v * v);
    }
    return q;
  }();
  return rule;
}

double coadherence_probability(const SimConfig& config, int native, int target, double v, double gamma) {
  if (native == target) return 1.0;
  double q = config.coadherence[static_cast<std::size_t>(native)][static_cast<std::size_t>(target)];
  if (q <= 0.0 || q >= 1.0) return q;
  bool biased = std::find(config.biased_targets.begin(), config.biased_targets.end(), target) !=
                config.biased_targets.end();
  if (!biased || gamma == 0.0) return q;
  return stats::expit(stats::logit(q) + gamma * v);
}

int last_row(const SimSubject& s, int horizon) {
  return event_within(s, horizon) ? event_row(s, horizon) : horizon - 1;
}

}  // namespace

std::vector<double> limit_log_hr(const SimConfig& config, const std::vector<double>& lambda, bool cloned,
                                 double gamma) {
  const int K = config.K;
  const int H = config.horizon;
  const auto& quad = normal_quadrature();
  std::vector<std::vector<double>> mass(static_cast<std::size_t>(K), std::vector<double>(static_cast<std::size_t>(H), 0.0));
  auto events = mass;
  for (int native = 0; native < K; ++native) {
    for (std::size_t j = 0; j < quad.nodes.size(); ++j) {
      double v = config.v_mean + config.v_sd * quad.nodes[j];
      double h = lambda[static_cast<std::size_t>(native)] * std::exp(config.theta * v);
      double p_event = -std::expm1(-h);
      for (int target = 0; target < K; ++target) {
        if (!cloned && target != native) continue;
        double q = coadherence_probability(config, native, target, v, gamma);
        if (q <= 0.0) continue;
        double adherent = 1.0;
        for (int t = 0; t < H; ++t) {
          adherent *= q;
          double m = quad.weights[j] * std::exp(-h * t) * adherent;
          mass[static_cast<std::size_t>(target)][static_cast<std::size_t>(t)] += m;
          events[static_cast<std::size_t>(target)][static_cast<std::size_t>(t)] += m * p_event;
        }
      }
    }
  }

  // Expected cells as weighted binary rows: intercept, time indicators,
  // regimen indicators against the reference.
  const int p = 1 + (H - 1) + (K - 1);
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys, ws;
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < H; ++t) {
      double m = mass[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)];
      double e = events[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)];
      if (m <= 0.0) continue;
      Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
      x[0] = 1.0;
      if (t > 0) x[t] = 1.0;
      if (k != config.ref_regimen) {
        int idx = k < config.ref_regimen ? k : k - 1;
        x[H + idx] = 1.0;
      }
      if (e > 0) {
        rows.push_back(x);
        ys.push_back(1.0);
        ws.push_back(e);
      }
      if (m - e > 0) {
        rows.push_back(x);
        ys.push_back(0.0);
        ws.push_back(m - e);
      }
    }
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  Eigen::VectorXd w = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(ws.size()));
  FitOptions options;
  options.coefficient_tolerance = 1e-12;
  options.deviance_tolerance = 0.0;
  FittedGlm fit = fit_logistic(x, y, w, {}, options);
  std::vector<double> out(static_cast<std::size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    if (k == config.ref_regimen) continue;
    int idx = k < config.ref_regimen ? k : k - 1;
    out[static_cast<std::size_t>(k)] = fit.coefficients[H + idx];
  }
  return out;
}

namespace {

// Multiplicative fixed-point iteration on the non-reference rates so that
// limit_log_hr(rates, cloned) hits goal.
std::vector<double> solve_rates(const SimConfig& config, std::vector<double> lambda,
                                const std::vector<double>& goal, bool cloned, int& iterations) {
  const auto K = static_cast<std::size_t>(config.K);
  for (iterations = 1; iterations <= 500; ++iterations) {
    std::vector<double> current = limit_log_hr(config, lambda, cloned);
    double worst = 0.0;
    for (std::size_t k = 0; k < K; ++k) worst = std::max(worst, std::fabs(goal[k] - current[k]));
    if (worst < 1e-11) return lambda;
    for (std::size_t k = 0; k < K; ++k) {
      if (static_cast<int>(k) == config.ref_regimen) continue;
      lambda[k] *= std::exp(goal[k] - current[k]);
      if (!(lambda[k] > 1e-8 && lambda[k] < 10.0))
        throw NumericalError("rate calibration for regimen " + std::to_string(k + 1) + " vs " +
                             std::to_string(config.ref_regimen + 1) + " left the admissible range");
    }
  }
  throw NumericalError("rate calibration did not converge");
}

}  // namespace

Calibration calibrate_rates(const SimConfig& config) {
  config.validate();
  const auto K = static_cast<std::size_t>(config.K);
  Calibration cal;
  cal.raw_lambda.resize(K);
  for (std::size_t k = 0; k < K; ++k) cal.raw_lambda[k] = config.lambda_ref * config.target_hr[k];
  int iterations = 0;
  if (config.marginal_truth) {
    std::vector<double> log_target(K);
    for (std::size_t k = 0; k < K; ++k) log_target[k] = std::log(config.target_hr[k]);
    cal.raw_lambda = solve_rates(config, cal.raw_lambda, log_target, false, iterations);
  }
  std::vector<double> goal = limit_log_hr(config, cal.raw_lambda, false);
  cal.lambda = solve_rates(config, cal.raw_lambda, goal, true, cal.iterations);
  std::vector<double> current = limit_log_hr(config, cal.lambda, true);
  cal.residual.resize(K);
  for (std::size_t k = 0; k < K; ++k) cal.residual[k] = std::expm1(current[k] - goal[k]);
  return cal;
}

std::vector<FreeCoadherence> default_free_coadherence() { return {{0, 1}, {2, 3}, {5, 4}}; }

double balance_coadherence(SimConfig& config, const std::vector<FreeCoadherence>& free) {
  const auto m = static_cast<Eigen::Index>(free.size());
  auto q_at = [&](const FreeCoadherence& f) -> double& {
    return config.coadherence[static_cast<std::size_t>(f.native)][static_cast<std::size_t>(f.target)];
  };
  // Residual: log mismatch between calibrated and raw rates of each target.
  auto residual = [&]() {
    Calibration cal = calibrate_rates(config);
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      auto k = static_cast<std::size_t>(free[static_cast<std::size_t>(i)].target);
      r[i] = std::log(cal.lambda[k] / cal.raw_lambda[k]);
    }
    return r;
  };
  Eigen::VectorXd r = residual();
  for (int iter = 0; iter < 30 && r.cwiseAbs().maxCoeff() > 1e-9; ++iter) {
    Eigen::MatrixXd jac(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      double& q = q_at(free[static_cast<std::size_t>(j)]);
      double saved = q;
      double h = 1e-5;
      q = saved + h;
      Eigen::VectorXd up = residual();
      q = saved;
      jac.col(j) = (up - r) / h;
    }
    Eigen::VectorXd step = jac.fullPivLu().solve(-r);
    for (Eigen::Index j = 0; j < m; ++j) {
      double& q = q_at(free[static_cast<std::size_t>(j)]);
      q = std::clamp(q + step[j], 1e-6, 1.0 - 1e-6);
    }
    r = residual();
  }
  return std::expm1(r.cwiseAbs().maxCoeff());
}

SimSubject generate_subject(std::mt19937_64& rng, int native, const std::vector<double>& lambda,
                            const SimConfig& config) {
  SimSubject s;
  s.native = native;
  std::normal_distribution<double> normal(config.v_mean, config.v_sd);
  s.v = config.v_sd > 0 ? normal(rng) : config.v_mean;
  double rate = lambda[static_cast<std::size_t>(native)] * std::exp(config.theta * s.v);
  std::exponential_distribution<double> expo(rate);
  s.event_time = expo(rng);
  return s;
}

int event_row(const SimSubject& subject, int horizon) {
  double c = std::ceil(subject.event_time);
  return static_cast<int>(std::min<double>(std::max(c - 1.0, 0.0), horizon));
}

bool event_within(const SimSubject& subject, int horizon) { return subject.event_time <= horizon; }

std::vector<std::vector<bool>> simulate_coadherence(std::mt19937_64& rng, const SimSubject& subject,
                                                    const SimConfig& config) {
  const int last = last_row(subject, config.horizon);
  const double gamma = config.gamma();
  std::vector<std::vector<bool>> out(static_cast<std::size_t>(config.K));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k < config.K; ++k) {
    auto& a = out[static_cast<std::size_t>(k)];
    if (k == subject.native) {
      a.assign(static_cast<std::size_t>(last + 1), true);
      continue;
    }
    double q = coadherence_probability(config, subject.native, k, subject.v, gamma);
    if (q <= 0.0) continue;
    for (int t = 0; t <= last; ++t) {
      bool ok = unif(rng) < q;
      a.push_back(ok);
      if (!ok) break;
    }
  }
  return out;
}

SimCohort simulate_cohort(std::mt19937_64& rng, const std::vector<double>& lambda, const SimConfig& config) {
  SimCohort cohort;
  CloneTable& table = cohort.clones;
  table.start_t = -1;
  table.horizon = config.horizon - 1;
  for (int k = 0; k < config.K; ++k) table.regimen_ids.push_back(k + 1);
  const std::size_t n = static_cast<std::size_t>(config.K) * static_cast<std::size_t>(config.n_k);
  cohort.subjects.reserve(n);
  cohort.adherence.reserve(n);
  table.subject_ids.reserve(n);
  table.baselines.reserve(n);
  for (int native = 0; native < config.K; ++native) {
    for (int i = 0; i < config.n_k; ++i) {
      SimSubject s = generate_subject(rng, native, lambda, config);
      cohort.adherence.push_back(simulate_coadherence(rng, s, config));
      cohort.subjects.push_back(s);
    }
  }
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& s = cohort.subjects[i];
    table.subject_ids.push_back("s" + std::to_string(i + 1));
    BaselineCovariates b;
    b.extra["V"] = s.v;
    table.baselines.push_back(std::move(b));
    bool dies = event_within(s, config.horizon);
    int erow = event_row(s, config.horizon);
    for (int k = 0; k < config.K; ++k) {
      const auto& a = cohort.adherence[i][static_cast<std::size_t>(k)];
      for (std::size_t t = 0; t < a.size(); ++t) {
        CloneRow row;
        row.subject = i;
        row.regimen = k + 1;
        row.t = static_cast<int>(t);
        row.adherent = a[t];
        row.censored = !a[t];
        row.event = a[t] && dies && row.t == erow;
        table.rows.push_back(row);
      }
    }
  }
  return cohort;
}

std::mt19937_64 replication_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index & 0xffffffffu),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  return std::mt19937_64(seq);
}

namespace {

MsmSpec simulation_msm(const SimConfig& config) {
  MsmSpec spec;
  spec.name = "simulation";
  spec.form = EffectForm::factor;
  spec.reference_regimen = config.ref_regimen + 1;
  return spec;
}

void collect(std::vector<SimEstimate>& out, std::size_t index, SimAnalysis analysis, const MsmFit& fit,
             const SimConfig& config) {
  for (int k : config.comparisons) {
    HazardRatio h = hazard_ratio(fit, k + 1, config.ref_regimen + 1);
    if (!h.available) throw NumericalError("comparison " + std::to_string(k + 1) + " has no events");
    out.push_back({index, analysis, k, h.log_hr, h.se});
  }
}

}  // namespace

std::vector<SimEstimate> run_replication(std::size_t index, const std::vector<double>& lambda,
                                         const SimConfig& config) {
  auto rng = replication_rng(config.seed, index);
  SimCohort cohort = simulate_cohort(rng, lambda, config);
  MsmSpec msm = simulation_msm(config);
  std::vector<SimEstimate> out;
  SimAnalysis stage = SimAnalysis::complete_data;
  try {
    CloneTable natives = cohort.clones;
    natives.rows.clear();
    for (const auto& r : cohort.clones.rows) {
      if (r.regimen - 1 == cohort.subjects[r.subject].native) natives.rows.push_back(r);
    }
    collect(out, index, stage, fit_msm(build_person_time(natives, false), msm), config);

    stage = SimAnalysis::clones_unweighted;
    collect(out, index, stage, fit_msm(build_person_time(cohort.clones, false), msm), config);

    stage = SimAnalysis::clones_weighted;
    WeightModelSpec ws;
    ws.numerator = DesignSpec::parse({"intercept", "time"});
    ws.denominator = DesignSpec::parse({"intercept", "time", "extra:V"});
    ws.stratify_by_regimen = true;
    // Native clones adhere with probability one, so only the other clones'
    // adherence is modelled; natives keep weight 1.
    CloneTable foreign = cohort.clones;
    foreign.rows.clear();
    std::vector<std::size_t> source;
    for (std::size_t i = 0; i < cohort.clones.rows.size(); ++i) {
      const auto& r = cohort.clones.rows[i];
      if (r.regimen - 1 != cohort.subjects[r.subject].native) {
        foreign.rows.push_back(r);
        source.push_back(i);
      }
    }
    WeightModels models = fit_adherence_models(foreign, ws);
    std::vector<WeightTable> tables{compute_stabilized_weights(foreign, models)};
    CombinedWeights combined = combine_weights(foreign, tables);
    for (auto& r : cohort.clones.rows) r.w_total = 1.0;
    for (std::size_t j = 0; j < source.size(); ++j) cohort.clones.rows[source[j]].w_total = combined.w_total[j];
    collect(out, index, stage, fit_msm(build_person_time(cohort.clones, true), msm), config);
  } catch (const Error& e) {
    throw NumericalError("replication " + std::to_string(index) + ", " + to_string(stage) + ": " + e.what());
  }
  return out;
}

const SimSummaryRow& SimSummary::find(int regimen, SimAnalysis analysis) const {
  for (const auto& r : rows) {
    if (r.regimen == regimen && r.analysis == analysis) return r;
  }
  throw std::out_of_range("no summary row for regimen " + std::to_string(regimen));
}

SimSummary summarize(const std::vector<SimEstimate>& estimates, const std::vector<double>& truth) {
  std::map<std::pair<int, int>, std::vector<const SimEstimate*>> groups;
  std::map<std::size_t, bool> reps;
  for (const auto& e : estimates) {
    groups[{e.regimen, static_cast<int>(e.analysis)}].push_back(&e);
    reps[e.replication] = true;
  }
  SimSummary summary;
  summary.replications = reps.size();
  for (const auto& [key, group] : groups) {
    SimSummaryRow row;
    row.regimen = key.first;
    row.analysis = static_cast<SimAnalysis>(key.second);
    row.true_hr = truth.at(static_cast<std::size_t>(row.regimen));
    std::vector<double> hr, log_hr, se;
    std::size_t covered = 0;
    double log_truth = std::log(row.true_hr);
    for (const auto* e : group) {
      hr.push_back(std::exp(e->log_hr));
      log_hr.push_back(e->log_hr);
      se.push_back(e->se);
      if (std::fabs(e->log_hr - log_truth) <= stats::kZ975 * e->se) ++covered;
    }
    row.replications = group.size();
    row.median_hr = stats::median(hr);
    row.ese_log = stats::sd(log_hr);
    row.ase_log = stats::mean(se);
    row.ese = row.ese_log * row.median_hr;
    row.ase = row.ase_log * row.median_hr;
    row.ecp = 100.0 * static_cast<double>(covered) / static_cast<double>(group.size());
    summary.rows.push_back(row);
  }
  return summary;
}

SimStudy run_study(const SimConfig& config, unsigned threads) {
  SimStudy study;
  study.config = config;
  study.calibration = calibrate_rates(config);
  const auto reps = static_cast<std::size_t>(config.replications);
  std::vector<std::vector<SimEstimate>> results(reps);
  std::vector<std::string> failures(reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reps; i = next++) {
      try {
        results[i] = run_replication(i, study.calibration.lambda, config);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(reps)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < reps; ++i) {
    if (!failures[i].empty()) throw NumericalError(failures[i]);
    study.estimates.insert(study.estimates.end(), results[i].begin(), results[i].end());
  }
  // The calibrated post-cloning hazard ratios are the truth for coverage.
  std::vector<double> truth = limit_log_hr(config, study.calibration.lambda, true);
  for (auto& v : truth) v = std::exp(v);
  study.summary = summarize(study.estimates, truth);
  return study;
}

void write_estimates(const std::vector<SimEstimate>& estimates, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.schema({"replication", "analysis", "regimen", "log_hr", "se"});
  for (const auto& e : estimates) {
    w.row({std::to_string(e.replication), to_string(e.analysis), std::to_string(e.regimen + 1),
           csv::format_double(e.log_hr), csv::format_double(e.se)});
  }
}

std::vector<SimEstimate> read_estimates(std::istream& in, char delim) {
  csv::Table t = csv::read(in, delim);
  std::size_t c_rep = t.column("replication"), c_an = t.column("analysis"), c_k = t.column("regimen"),
              c_log = t.column("log_hr"), c_se = t.column("se");
  for (std::size_t c : {c_rep, c_an, c_k, c_log, c_se}) {
    if (c == csv::Table::npos) throw SchemaError("estimate table lacks a required column");
  }
  std::vector<SimEstimate> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    SimEstimate e;
    long long rep = 0, k = 0;
    if (!csv::parse_int(r.at(c_rep), rep) || !csv::parse_int(r.at(c_k), k) ||
        !csv::parse_double(r.at(c_log), e.log_hr) || !csv::parse_double(r.at(c_se), e.se))
      throw DataError("malformed estimate on line " + std::to_string(t.line_numbers[i]));
    e.replication = static_cast<std::size_t>(rep);
    e.regimen = static_cast<int>(k) - 1;
    e.analysis = parse_analysis(r.at(c_an));
    out.push_back(e);
  }
  return out;
}

void write_summary(const SimSummary& summary, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.comment("replications " + std::to_string(summary.replications));
  w.schema({"regimen", "analysis", "true_hr", "median_hr", "ese", "ase", "ese_log", "ase_log", "ecp",
            "replications"});
  for (const auto& r : summary.rows) {
    w.row({std::to_string(r.regimen + 1), to_string(r.analysis), csv::format_double(r.true_hr),
           csv::format_double(r.median_hr), csv::format_double(r.ese), csv::format_double(r.ase),
           csv::format_double(r.ese_log), csv::format_double(r.ase_log), csv::format_double(r.ecp),
           std::to_string(r.replications)});
  }
}

void write_comparison_table(const SimSummary& summary, const SimConfig& config, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.comment("scenario " + to_string(config.bias_level) + ", " + std::to_string(summary.replications) +
            " replications, n_k=" + std::to_string(config.n_k));
  w.schema({"Regimen", "True HR", "Complete data HR", "Unweighted HR", "Unweighted ESE", "Unweighted ASE",
            "Unweighted ECP", "Weighted HR", "Weighted ESE", "Weighted ASE", "Weighted ECP"});
  for (int k : config.comparisons) {
    const auto& c = summary.find(k, SimAnalysis::complete_data);
    const auto& u = summary.find(k, SimAnalysis::clones_unweighted);
    const auto& x = summary.find(k, SimAnalysis::clones_weighted);
    w.row({std::to_string(k + 1) + " vs " + std::to_string(config.ref_regimen + 1),
           csv::format_fixed(config.target_hr[static_cast<std::size_t>(k)], 2), csv::format_fixed(c.median_hr, 2),
           csv::format_fixed(u.median_hr, 2), csv::format_fixed(u.ese, 4), csv::format_fixed(u.ase, 4),
           csv::format_fixed(u.ecp, 1), csv::format_fixed(x.median_hr, 2), csv::format_fixed(x.ese, 4),
           csv::format_fixed(x.ase, 4), csv::format_fixed(x.ecp, 1)});
  }
}

void write_calibration(const Calibration& calibration, const SimConfig& config, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.comment("iterations " + std::to_string(calibration.iterations));
  w.schema({"regimen", "target_hr", "raw_lambda", "lambda", "residual"});
  for (std::size_t k = 0; k < calibration.lambda.size(); ++k) {
    w.row({std::to_string(k + 1), csv::format_double(config.target_hr[k]),
           csv::format_double(calibration.raw_lambda[k]), csv::format_double(calibration.lambda[k]),
           csv::format_double(calibration.residual[k])});
  }
}

RegimenGrid simulation_grid(int K, int ref) {
  RegimenGrid grid;
  for (int k = 0; k < K; ++k) grid.specs.push_back(usrds_family(0.25, 31.0 + k, k + 1));
  grid.reference_id = ref + 1;
  return grid;
}

SubjectHistory materialize_clone(const SimSubject& subject, const std::vector<bool>& adherence,
                                 const RegimenSpec& regimen, const std::string& id, int horizon) {
  SubjectHistory h;
  h.id = id;
  h.baseline.extra["V"] = subject.v;
  double marker = regimen.midpoint();
  double dose = 1.0;
  h.visits.push_back({0, marker, dose, {}});
  for (std::size_t t = 0; t < adherence.size(); ++t) {
    dose *= adherence[t] ? 1.0 : 2.0;
    h.visits.push_back({static_cast<int>(t) + 1, marker, dose, {}});
  }
  h.last_followup = h.visits.back().t;
  if (event_within(subject, horizon)) {
    h.event_time = subject.event_time + 1.0;
    h.event_observed = true;
  }
  return h;
}

}  // namespace dtrclone

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dtrclone/design.hpp"
#include "dtrclone/glm.hpp"
#include "dtrclone/regimen.hpp"

namespace dtrclone {

enum class CensoringProcess { adherence, admin, ltfu };

std::string to_string(CensoringProcess process);
CensoringProcess parse_process(const std::string& text);

struct WeightModelSpec {
  DesignSpec numerator;
  DesignSpec denominator;
  bool stratify_by_regimen = true;
  // Percentiles in (0, 1), e.g. {0.01, 0.99}.
  std::optional<std::pair<double, double>> truncation;
  FitOptions fit;

  // Throws ConfigError when the numerator uses time-varying terms other than
  // time itself, or when a numerator term is missing from the denominator.
  void validate() const;
};

// Modelled record for one process: the response is 1 when the clone
// remains adherent (or uncensored) at the row.
struct WeightRecord {
  std::size_t row = 0;
  bool response = true;
};

// Adherence records are the rows after start_t. Censoring records are
// adherent, event-free rows before the horizon; the response is 0 on the
// last row of a clone whose follow-up ends through the named process.
std::vector<WeightRecord> weight_records(const CloneTable& clones, CensoringProcess process);

RowView row_view(const CloneTable& clones, const CloneRow& row);

struct StratumFit {
  std::optional<int> regimen;  // empty when pooled
  std::size_t records = 0;
  std::size_t events = 0;      // records with response 0
  bool degenerate = false;
  FrozenDesign numerator_design;
  FrozenDesign denominator_design;
  std::optional<FittedGlm> numerator;
  std::optional<FittedGlm> denominator;
};

struct WeightModels {
  CensoringProcess process = CensoringProcess::adherence;
  std::vector<StratumFit> strata;
  std::vector<std::string> warnings;

  const StratumFit* find(int regimen) const;
};

WeightModels fit_weight_models(const CloneTable& clones, CensoringProcess process,
                               const WeightModelSpec& spec);
WeightModels fit_adherence_models(const CloneTable& clones, const WeightModelSpec& spec);

// Per-row probabilities and cumulative stabilized weights, aligned with
// CloneTable::rows. p_num/p_den are NaN on rows without a record.
struct WeightTable {
  CensoringProcess process = CensoringProcess::adherence;
  std::vector<double> p_num;
  std::vector<double> p_den;
  std::vector<double> sw;
  std::vector<std::string> warnings;
};

// Adherence weights multiply records up to and including t; censoring
// weights multiply records strictly before t. Throws PositivityError when a
// fitted denominator probability is below 1e-12.
WeightTable compute_weights(const CloneTable& clones, const WeightModels& models);
WeightTable compute_stabilized_weights(const CloneTable& clones, const WeightModels& models);
WeightTable compute_censoring_weights(const CloneTable& clones, CensoringProcess which,
                                      const WeightModelSpec& spec);

struct WeightSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double p01 = 0.0;
  double p25 = 0.0;
  double median = 0.0;
  double p75 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};

WeightSummary summarize_weights(std::span<const double> values);

struct CombinedWeights {
  std::vector<double> w_total;
  WeightSummary before;
  WeightSummary after;
  std::optional<std::pair<double, double>> bounds;  // applied truncation limits
};

// Product of the component weights per row, then optional winsorizing at
// the given percentiles of the adherent rows' weights.
CombinedWeights combine_weights(const CloneTable& clones, std::span<const WeightTable> tables,
                                std::optional<std::pair<double, double>> truncation = std::nullopt);

// Copies component and total weights onto the clone rows.
void apply_weights(CloneTable& clones, std::span<const WeightTable> tables,
                   const CombinedWeights& combined);

struct PositivityEntry {
  std::optional<int> regimen;
  std::size_t records = 0;
  double min_p_den = 0.0;
  double max_p_den = 0.0;
  std::size_t below_001 = 0;
  std::size_t above_099 = 0;
  WeightSummary weights;
};

struct PositivityReport {
  CensoringProcess process = CensoringProcess::adherence;
  std::vector<PositivityEntry> entries;  // strata without records are absent
};

PositivityReport positivity_diagnostics(const WeightModels& models, const CloneTable& clones);

void write_weight_audit(const CloneTable& clones, std::span<const WeightTable> tables,
                        const CombinedWeights& combined, std::ostream& out, char delim = ',');
void write_positivity(std::span<const PositivityReport> reports, std::ostream& out, char delim = ',');

}  // namespace dtrclone

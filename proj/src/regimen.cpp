#include "dtrclone/regimen.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"

namespace dtrclone {

namespace {

constexpr double kRelTol = 1e-12;

}  // namespace

Zone RegimenSpec::zone(double marker) const {
  if (marker > b2) return Zone::above;
  if (marker < b1) return Zone::below;
  return Zone::within;
}

std::pair<double, double> RegimenSpec::factors(Zone z) const {
  switch (z) {
    case Zone::above: return {p[0], p[1]};
    case Zone::within: return {p[2], p[3]};
    case Zone::below: return {p[4], p[5]};
  }
  return {p[2], p[3]};
}

std::vector<std::string> RegimenSpec::validate() const {
  auto who = label.empty() ? "regimen " + std::to_string(id) : label;
  if (!(b1 < b2)) throw ConfigError(who + ": target range requires b1 < b2");
  for (double v : p) {
    if (std::isnan(v) || v < 0) throw ConfigError(who + ": factor bounds must be nonnegative");
  }
  for (int z = 0; z < 3; ++z) {
    if (p[2 * z] > p[2 * z + 1]) throw ConfigError(who + ": factor interval lower bound exceeds upper");
  }
  std::vector<std::string> warnings;
  if (!(p[2] <= 1.0 && 1.0 <= p[3]))
    warnings.push_back(who + ": within-target interval does not contain 1 (no maintain option)");
  return warnings;
}

std::string family_label(double p, double lo, double hi) {
  return "G(" + csv::format_double(p) + "," + csv::format_double(lo) + "," + csv::format_double(hi) + ")";
}

RegimenSpec usrds_family(double p, double x, int id) {
  if (!(p > 0 && p < 1)) throw ConfigError("family parameter p must lie in (0, 1)");
  if (x - 3 < 0) throw ConfigError("family midpoint x must be at least 3");
  RegimenSpec spec;
  spec.id = id;
  spec.p = {0.0, 1.0 - p, 0.75, 1.25, 1.0 + p, std::numeric_limits<double>::infinity()};
  spec.b1 = x - 3;
  spec.b2 = x + 3;
  spec.label = family_label(p, spec.b1, spec.b2);
  return spec;
}

void RegimenGrid::validate() const {
  if (specs.empty()) throw ConfigError("regimen grid is empty");
  std::unordered_set<int> ids;
  for (const auto& s : specs) {
    s.validate();
    if (!ids.insert(s.id).second) throw ConfigError("duplicate regimen id " + std::to_string(s.id));
  }
  if (!ids.count(reference_id))
    throw ConfigError("reference regimen id " + std::to_string(reference_id) + " not in grid");
}

const RegimenSpec& RegimenGrid::by_id(int id) const {
  for (const auto& s : specs) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown regimen id " + std::to_string(id));
}

bool RegimenGrid::contains(int id) const {
  return std::any_of(specs.begin(), specs.end(), [id](const RegimenSpec& s) { return s.id == id; });
}

RegimenGrid family_grid(const std::vector<double>& p_values, const std::vector<double>& x_values,
                        const std::string& reference_label) {
  RegimenGrid grid;
  int id = 0;
  for (double p : p_values) {
    for (double x : x_values) grid.specs.push_back(usrds_family(p, x, id++));
  }
  bool found = false;
  for (const auto& s : grid.specs) {
    if (s.label == reference_label) {
      grid.reference_id = s.id;
      found = true;
    }
  }
  if (!found) throw ConfigError("reference regimen '" + reference_label + "' not in grid");
  grid.validate();
  return grid;
}

DoseInterval allowable_dose_interval(const RegimenSpec& spec, double prev_dose, double marker) {
  if (!(prev_dose > 0)) throw std::invalid_argument("allowable_dose_interval requires prev_dose > 0");
  auto [lo, hi] = spec.factors(spec.zone(marker));
  return {prev_dose * lo, std::isinf(hi) ? hi : prev_dose * hi};
}

bool is_adherent(const RegimenSpec& spec, double prev_dose, double marker, double new_dose) {
  if (prev_dose == 0.0) {
    return spec.zone(marker) == Zone::below ? new_dose > 0.0 : new_dose == 0.0;
  }
  auto interval = allowable_dose_interval(spec, prev_dose, marker);
  double slack = kRelTol * prev_dose;
  return new_dose >= interval.lo - slack && new_dose <= interval.hi + slack;
}

AdherenceTrace adherence_trace(const RegimenSpec& spec, const SubjectHistory& subject, int start_t,
                               const TraceOptions& options) {
  AdherenceTrace trace;
  const auto& visits = subject.visits;
  auto it = std::find_if(visits.begin(), visits.end(), [start_t](const Visit& v) { return v.t == start_t; });
  if (it == visits.end()) return trace;
  auto markers = resolve_markers(subject, options.marker_source);

  auto first = static_cast<std::size_t>(it - visits.begin());
  for (std::size_t i = first; i < visits.size(); ++i) {
    if (i > first && visits[i].t != visits[i - 1].t + 1) break;
    bool a = true;
    if (i > first) {
      const auto& prev = visits[i - 1];
      const auto& cur = visits[i];
      const auto& m = markers[i];
      bool marker_ok = m.value.has_value() && !(options.censor_on_missing_marker && !cur.marker);
      if (!prev.dose || !cur.dose || !marker_ok) {
        a = false;
      } else {
        a = is_adherent(spec, *prev.dose, *m.value, *cur.dose);
      }
    }
    trace.t.push_back(visits[i].t);
    trace.adherent.push_back(a);
    if (!a && !trace.censor_visit) trace.censor_visit = visits[i].t;
  }
  return trace;
}

std::vector<CloneSpan> clone_spans(const CloneTable& table) {
  std::vector<CloneSpan> spans;
  const auto& rows = table.rows;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= rows.size(); ++i) {
    if (i == rows.size() || rows[i].subject != rows[begin].subject ||
        rows[i].regimen != rows[begin].regimen) {
      if (i > begin) spans.push_back({begin, i});
      begin = i;
    }
  }
  return spans;
}

CloneEnd clone_end(const CloneTable& table, const CloneSpan& span) {
  const auto& last = table.rows[span.end - 1];
  if (last.event) return CloneEnd::event;
  if (last.censored) return CloneEnd::nonadherence;
  if (last.t >= table.horizon) return CloneEnd::administrative;
  return CloneEnd::lost;
}

CloneTable clone_cohort(const Cohort& cohort, const RegimenGrid& grid, int start_t,
                        const CloneOptions& options) {
  grid.validate();
  CloneTable table;
  table.start_t = start_t;
  table.horizon = options.horizon.value_or(cohort.visit_horizon);
  for (const auto& spec : grid.specs) table.regimen_ids.push_back(spec.id);

  for (const auto& subject : cohort.subjects) {
    if (!subject.visit_at(start_t)) continue;
    std::size_t subject_index = table.subject_ids.size();
    table.subject_ids.push_back(subject.id);
    table.baselines.push_back(subject.baseline);
    auto markers = resolve_markers(subject, options.trace.marker_source);
    std::size_t first = 0;
    while (subject.visits[first].t != start_t) ++first;

    for (const auto& spec : grid.specs) {
      auto trace = adherence_trace(spec, subject, start_t, options.trace);
      for (std::size_t j = 0; j < trace.t.size(); ++j) {
        int t = trace.t[j];
        if (t > subject.last_followup || t > table.horizon) break;
        std::size_t vi = first + j;
        const auto& visit = subject.visits[vi];
        CloneRow row;
        row.subject = subject_index;
        row.regimen = spec.id;
        row.t = t;
        row.adherent = trace.adherent[j];
        row.censored = !row.adherent;
        row.event = !row.censored && event_indicator(subject, t);
        row.marker = markers[vi].value.value_or(std::numeric_limits<double>::quiet_NaN());
        row.dose = visit.dose.value_or(std::numeric_limits<double>::quiet_NaN());
        if (vi > 0 && subject.visits[vi - 1].t == t - 1) {
          row.prev_marker = markers[vi - 1].value.value_or(std::numeric_limits<double>::quiet_NaN());
          row.prev_dose = subject.visits[vi - 1].dose.value_or(std::numeric_limits<double>::quiet_NaN());
        }
        table.rows.push_back(row);
        if (row.censored || row.event) break;
      }
    }
  }
  return table;
}

namespace {

std::string num(double v) { return std::isnan(v) ? std::string() : csv::format_double(v); }

double parse_num(const std::string& text, const std::string& where) {
  if (text.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v;
  if (!csv::parse_double(text, v)) throw DataError("unparseable number '" + text + "'" + where);
  return v;
}

std::optional<double> parse_opt(const std::string& text, const std::string& where) {
  if (text.empty()) return std::nullopt;
  return parse_num(text, where);
}

}  // namespace

void write_clone_table(const CloneTable& table, std::ostream& out, char delim) {
  std::vector<std::string> extras;
  if (!table.baselines.empty()) {
    for (const auto& [name, value] : table.baselines.front().extra) extras.push_back(name);
  }
  std::vector<std::string> header{"subject_id", "regimen_id", "t", "adherent", "censored", "event",
                                  "marker", "prev_marker", "prev_dose", "dose", "sex", "age", "race",
                                  "diabetes", "hypertension"};
  for (const auto& e : extras) header.push_back("extra." + e);
  for (const char* w : {"sw_adherence", "sw_admin", "sw_ltfu", "w_total"}) header.emplace_back(w);

  csv::Writer w(out, delim);
  std::string regimens;
  for (std::size_t k = 0; k < table.regimen_ids.size(); ++k) {
    if (k) regimens += ";";
    regimens += std::to_string(table.regimen_ids[k]);
  }
  w.comment("meta start_t=" + std::to_string(table.start_t) + " horizon=" +
            std::to_string(table.horizon) + " regimens=" + regimens);
  w.schema(header);
  for (const auto& r : table.rows) {
    const auto& b = table.baselines[r.subject];
    std::vector<std::string> f{table.subject_ids[r.subject], std::to_string(r.regimen),
                               std::to_string(r.t), r.adherent ? "1" : "0", r.censored ? "1" : "0",
                               r.event ? "1" : "0", num(r.marker), num(r.prev_marker),
                               num(r.prev_dose), num(r.dose), b.male ? "1" : "0",
                               csv::format_double(b.age), std::string(to_string(b.race)),
                               b.diabetes ? "1" : "0", b.hypertension ? "1" : "0"};
    for (const auto& e : extras) {
      auto it = b.extra.find(e);
      f.push_back(it == b.extra.end() ? std::string() : csv::format_double(it->second));
    }
    for (const auto* opt : {&r.sw_adherence, &r.sw_admin, &r.sw_ltfu, &r.w_total})
      f.push_back(csv::format_optional(*opt));
    w.row(f);
  }
}

CloneTable read_clone_table(std::istream& in, char delim) {
  auto table = csv::read(in, delim);
  CloneTable clones;
  bool have_meta = false;
  for (const auto& c : table.comments) {
    if (c.rfind("meta ", 0) != 0) continue;
    std::istringstream ss(c.substr(5));
    std::string kv;
    while (ss >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      auto key = kv.substr(0, eq);
      auto value = kv.substr(eq + 1);
      if (key == "start_t") clones.start_t = std::stoi(value);
      if (key == "horizon") clones.horizon = std::stoi(value);
      if (key == "regimens") {
        std::istringstream rs(value);
        std::string id;
        while (std::getline(rs, id, ';')) {
          if (!id.empty()) clones.regimen_ids.push_back(std::stoi(id));
        }
      }
    }
    have_meta = true;
  }
  if (!have_meta) throw SchemaError("clone table lacks its meta comment line");

  auto col = [&](const char* name) {
    auto i = table.column(name);
    if (i == csv::Table::npos) throw SchemaError(std::string("clone table missing column '") + name + "'");
    return i;
  };
  auto c_id = col("subject_id"), c_reg = col("regimen_id"), c_t = col("t"), c_a = col("adherent"),
       c_c = col("censored"), c_e = col("event"), c_m = col("marker"), c_pm = col("prev_marker"),
       c_pd = col("prev_dose"), c_d = col("dose"), c_sex = col("sex"), c_age = col("age"),
       c_race = col("race"), c_dia = col("diabetes"), c_hyp = col("hypertension"),
       c_swa = col("sw_adherence"), c_swad = col("sw_admin"), c_swl = col("sw_ltfu"),
       c_w = col("w_total");
  std::vector<std::pair<std::string, std::size_t>> extras;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i].rfind("extra.", 0) == 0) extras.emplace_back(table.header[i].substr(6), i);
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    auto where = " (line " + std::to_string(table.line_numbers[r]) + ")";
    if (f.size() != table.header.size()) throw DataError("wrong field count" + where);
    auto [it, inserted] = index.emplace(f[c_id], clones.subject_ids.size());
    if (inserted) {
      clones.subject_ids.push_back(f[c_id]);
      BaselineCovariates b;
      b.male = f[c_sex] == "1";
      b.age = parse_num(f[c_age], where);
      auto race = parse_race(f[c_race]);
      if (!race) throw DataError("unknown race '" + f[c_race] + "'" + where);
      b.race = *race;
      b.diabetes = f[c_dia] == "1";
      b.hypertension = f[c_hyp] == "1";
      for (const auto& [name, i] : extras) {
        if (!f[i].empty()) b.extra[name] = parse_num(f[i], where);
      }
      clones.baselines.push_back(std::move(b));
    }
    CloneRow row;
    row.subject = it->second;
    long long v;
    if (!csv::parse_int(f[c_reg], v)) throw DataError("bad regimen_id" + where);
    row.regimen = static_cast<int>(v);
    if (!csv::parse_int(f[c_t], v)) throw DataError("bad t" + where);
    row.t = static_cast<int>(v);
    row.adherent = f[c_a] == "1";
    row.censored = f[c_c] == "1";
    row.event = f[c_e] == "1";
    row.marker = parse_num(f[c_m], where);
    row.prev_marker = parse_num(f[c_pm], where);
    row.prev_dose = parse_num(f[c_pd], where);
    row.dose = parse_num(f[c_d], where);
    row.sw_adherence = parse_opt(f[c_swa], where);
    row.sw_admin = parse_opt(f[c_swad], where);
    row.sw_ltfu = parse_opt(f[c_swl], where);
    row.w_total = parse_opt(f[c_w], where);
    clones.rows.push_back(row);
  }
  return clones;
}

}  // namespace dtrclone

#include "dtrclone/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <ostream>
#include <unordered_map>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"
#include "dtrclone/stats.hpp"

namespace dtrclone {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::optional<bool> parse_bool(std::string_view text) {
  auto s = lower(text);
  if (s == "1" || s == "true" || s == "yes" || s == "y") return true;
  if (s == "0" || s == "false" || s == "no" || s == "n") return false;
  return std::nullopt;
}

std::optional<bool> parse_sex(std::string_view text) {
  auto s = lower(text);
  if (s == "m" || s == "male") return true;
  if (s == "f" || s == "female") return false;
  return parse_bool(text);
}

struct ColumnIndex {
  std::size_t id, t, marker, dose;
  std::size_t sex = csv::Table::npos, age = csv::Table::npos, race = csv::Table::npos,
              diabetes = csv::Table::npos, hypertension = csv::Table::npos;
  std::vector<std::size_t> extra, aux;
};

std::size_t require_column(const csv::Table& table, const std::string& name) {
  auto idx = table.column(name);
  if (idx == csv::Table::npos) throw SchemaError("missing required column '" + name + "'");
  return idx;
}

std::size_t optional_column(const csv::Table& table, const std::string& name) {
  return name.empty() ? csv::Table::npos : require_column(table, name);
}

// Parses the baseline fields of one row; returns an error message on failure.
std::optional<std::string> parse_baseline(const std::vector<std::string>& row,
                                          const ColumnIndex& col, const CohortSchema& schema,
                                          BaselineCovariates& out) {
  if (col.sex != csv::Table::npos) {
    auto v = parse_sex(row[col.sex]);
    if (!v) return "unparseable " + schema.sex + " '" + row[col.sex] + "'";
    out.male = *v;
  }
  if (col.age != csv::Table::npos) {
    double age;
    if (!csv::parse_double(row[col.age], age) || age < 0 || !std::isfinite(age))
      return "invalid " + schema.age + " '" + row[col.age] + "'";
    out.age = age;
  }
  if (col.race != csv::Table::npos) {
    auto v = parse_race(row[col.race]);
    if (!v) return "unknown " + schema.race + " '" + row[col.race] + "'";
    out.race = *v;
  }
  if (col.diabetes != csv::Table::npos) {
    auto v = parse_bool(row[col.diabetes]);
    if (!v) return "unparseable " + schema.diabetes + " '" + row[col.diabetes] + "'";
    out.diabetes = *v;
  }
  if (col.hypertension != csv::Table::npos) {
    auto v = parse_bool(row[col.hypertension]);
    if (!v) return "unparseable " + schema.hypertension + " '" + row[col.hypertension] + "'";
    out.hypertension = *v;
  }
  for (std::size_t j = 0; j < col.extra.size(); ++j) {
    double v;
    const auto& text = row[col.extra[j]];
    if (!csv::parse_double(text, v))
      return "unparseable " + schema.extra_baseline[j] + " '" + text + "'";
    out.extra[schema.extra_baseline[j]] = v;
  }
  return std::nullopt;
}

void read_outcomes(std::istream& in, char delim, Cohort& cohort,
                   std::unordered_map<std::string, std::size_t>& index,
                   std::vector<bool>& followup_given) {
  auto table = csv::read(in, delim);
  auto c_id = require_column(table, "subject_id");
  auto c_time = require_column(table, "event_time");
  auto c_obs = require_column(table, "event_observed");
  auto c_fu = table.column("last_followup");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto where = " (outcomes line " + std::to_string(table.line_numbers[r]) + ")";
    if (row.size() != table.header.size()) throw DataError("wrong field count" + where);
    auto it = index.find(row[c_id]);
    if (it == index.end())
      throw DataError("outcome for unknown subject '" + row[c_id] + "'" + where);
    auto& subject = cohort.subjects[it->second];
    if (!row[c_time].empty()) {
      double et;
      if (!csv::parse_double(row[c_time], et)) throw DataError("unparseable event_time" + where);
      subject.event_time = et;
    }
    auto obs = parse_bool(row[c_obs]);
    if (!obs) throw DataError("unparseable event_observed" + where);
    subject.event_observed = *obs;
    if (c_fu != csv::Table::npos && !row[c_fu].empty()) {
      long long fu;
      if (!csv::parse_int(row[c_fu], fu) || fu < 0) throw DataError("invalid last_followup" + where);
      subject.last_followup = static_cast<int>(fu);
      followup_given[it->second] = true;
    }
  }
}

}  // namespace

std::string_view to_string(Race race) {
  switch (race) {
    case Race::white: return "white";
    case Race::black: return "black";
    case Race::other: return "other";
  }
  return "other";
}

std::optional<Race> parse_race(std::string_view text) {
  auto s = lower(text);
  if (s == "white" || s == "0") return Race::white;
  if (s == "black" || s == "1") return Race::black;
  if (s == "other" || s == "2") return Race::other;
  return std::nullopt;
}

const Visit* SubjectHistory::visit_at(int t) const {
  auto it = std::lower_bound(visits.begin(), visits.end(), t,
                             [](const Visit& v, int value) { return v.t < value; });
  return (it != visits.end() && it->t == t) ? &*it : nullptr;
}

void validate(const SubjectHistory& s) {
  auto who = "subject '" + s.id + "'";
  for (std::size_t i = 0; i < s.visits.size(); ++i) {
    const auto& v = s.visits[i];
    if (v.t < 0) throw DataError(who + ": negative visit index");
    if (i > 0 && v.t <= s.visits[i - 1].t)
      throw DataError(who + ": visits not strictly increasing at t " + std::to_string(v.t));
    if (v.dose && *v.dose < 0) throw DataError(who + ": negative dose at t " + std::to_string(v.t));
    if (v.marker && (*v.marker <= 0 || *v.marker >= 100))
      throw DataError(who + ": marker outside (0, 100) at t " + std::to_string(v.t));
  }
  if (s.event_time && *s.event_time <= 0) throw DataError(who + ": event_time must be positive");
  if (s.event_observed && !s.event_time)
    throw DataError(who + ": event observed without event_time");
  if (!s.visits.empty() && s.last_followup < s.visits.back().t)
    throw DataError(who + ": visit after last_followup");
  if (s.baseline.age < 0) throw DataError(who + ": negative age");
}

const SubjectHistory* Cohort::find(std::string_view id) const {
  for (const auto& s : subjects) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

Cohort make_cohort(std::vector<SubjectHistory> subjects, CohortSchema schema) {
  Cohort cohort;
  cohort.schema = std::move(schema);
  std::unordered_map<std::string, int> seen;
  for (const auto& s : subjects) {
    validate(s);
    if (!seen.emplace(s.id, 0).second) throw DataError("duplicate subject id '" + s.id + "'");
    cohort.visit_horizon = std::max(cohort.visit_horizon, s.last_followup);
    if (!s.visits.empty()) cohort.visit_horizon = std::max(cohort.visit_horizon, s.visits.back().t);
  }
  cohort.subjects = std::move(subjects);
  return cohort;
}

IngestResult ingest_cohort(std::istream& visits, const CohortSchema& schema,
                           std::istream* outcomes, char delim) {
  auto table = csv::read(visits, delim);
  ColumnIndex col;
  col.id = require_column(table, schema.subject_id);
  col.t = require_column(table, schema.t);
  col.marker = require_column(table, schema.marker);
  col.dose = require_column(table, schema.dose);
  col.sex = optional_column(table, schema.sex);
  col.age = optional_column(table, schema.age);
  col.race = optional_column(table, schema.race);
  col.diabetes = optional_column(table, schema.diabetes);
  col.hypertension = optional_column(table, schema.hypertension);
  for (const auto& name : schema.extra_baseline) col.extra.push_back(require_column(table, name));
  for (const auto& name : schema.aux) col.aux.push_back(require_column(table, name));

  IngestResult result;
  auto& cohort = result.cohort;
  cohort.schema = schema;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<bool> has_baseline;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::size_t line = table.line_numbers[r];
    auto reject = [&](std::string message) { result.rejected.push_back({line, std::move(message)}); };
    if (row.size() != table.header.size()) {
      reject("expected " + std::to_string(table.header.size()) + " fields, found " +
             std::to_string(row.size()));
      continue;
    }
    const auto& id = row[col.id];
    if (id.empty()) {
      reject("empty " + schema.subject_id);
      continue;
    }
    long long t;
    if (!csv::parse_int(row[col.t], t) || t < 0) {
      reject("invalid " + schema.t + " '" + row[col.t] + "'");
      continue;
    }
    Visit visit;
    visit.t = static_cast<int>(t);
    if (!row[col.marker].empty()) {
      double m;
      if (!csv::parse_double(row[col.marker], m) || m <= 0 || m >= 100) {
        reject("invalid " + schema.marker + " '" + row[col.marker] + "'");
        continue;
      }
      visit.marker = m;
    }
    if (!row[col.dose].empty()) {
      double d;
      if (!csv::parse_double(row[col.dose], d) || d < 0 || !std::isfinite(d)) {
        reject("invalid " + schema.dose + " '" + row[col.dose] + "'");
        continue;
      }
      visit.dose = d;
    }
    bool aux_ok = true;
    for (std::size_t j = 0; j < col.aux.size(); ++j) {
      const auto& text = row[col.aux[j]];
      if (text.empty()) continue;
      double v;
      if (!csv::parse_double(text, v)) {
        reject("unparseable " + schema.aux[j] + " '" + text + "'");
        aux_ok = false;
        break;
      }
      visit.aux[schema.aux[j]] = v;
    }
    if (!aux_ok) continue;

    auto [it, inserted] = index.emplace(id, cohort.subjects.size());
    if (inserted) {
      SubjectHistory s;
      s.id = id;
      cohort.subjects.push_back(std::move(s));
      has_baseline.push_back(false);
    }
    auto& subject = cohort.subjects[it->second];
    if (!has_baseline[it->second]) {
      BaselineCovariates baseline;
      if (auto err = parse_baseline(row, col, schema, baseline)) {
        reject(*err);
        if (inserted) {
          // Keep the subject slot; a later row may supply the baseline.
        }
        continue;
      }
      subject.baseline = std::move(baseline);
      has_baseline[it->second] = true;
    }
    if (!subject.visits.empty()) {
      int last = subject.visits.back().t;
      if (visit.t <= last) {
        if (subject.visit_at(visit.t))
          throw DataError("duplicate visit for subject " + id + " at t " + std::to_string(visit.t));
        throw DataError("non-monotone visit index for subject " + id + ": t " +
                        std::to_string(visit.t) + " after t " + std::to_string(last));
      }
    }
    subject.visits.push_back(std::move(visit));
  }

  // Subjects whose every row was rejected carry no data.
  std::vector<SubjectHistory> kept;
  std::unordered_map<std::string, std::size_t> kept_index;
  for (auto& s : cohort.subjects) {
    if (s.visits.empty()) continue;
    kept_index.emplace(s.id, kept.size());
    kept.push_back(std::move(s));
  }
  cohort.subjects = std::move(kept);

  std::vector<bool> followup_given(cohort.subjects.size(), false);
  if (outcomes) read_outcomes(*outcomes, delim, cohort, kept_index, followup_given);
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    auto& s = cohort.subjects[i];
    if (!followup_given[i]) s.last_followup = s.visits.back().t;
    validate(s);
    cohort.visit_horizon = std::max(cohort.visit_horizon, s.last_followup);
  }
  return result;
}

IngestResult ingest_cohort_files(const std::string& visits_path, const CohortSchema& schema,
                                 const std::string& outcomes_path, char delim) {
  std::ifstream vin(visits_path);
  if (!vin) throw DataError("cannot open visits file '" + visits_path + "'");
  if (outcomes_path.empty()) return ingest_cohort(vin, schema, nullptr, delim);
  std::ifstream oin(outcomes_path);
  if (!oin) throw DataError("cannot open outcomes file '" + outcomes_path + "'");
  return ingest_cohort(vin, schema, &oin, delim);
}

void emit_cohort(const Cohort& cohort, std::ostream& visits, std::ostream* outcomes, char delim) {
  const auto& sc = cohort.schema;
  std::vector<std::string> header{sc.subject_id, sc.t, sc.marker, sc.dose};
  for (const auto* name : {&sc.sex, &sc.age, &sc.race, &sc.diabetes, &sc.hypertension}) {
    if (!name->empty()) header.push_back(*name);
  }
  for (const auto& e : sc.extra_baseline) header.push_back(e);
  for (const auto& a : sc.aux) header.push_back(a);

  csv::Writer out(visits, delim);
  out.schema(header);
  for (const auto& s : cohort.subjects) {
    const auto& b = s.baseline;
    for (const auto& v : s.visits) {
      std::vector<std::string> row{s.id, std::to_string(v.t), csv::format_optional(v.marker),
                                   csv::format_optional(v.dose)};
      if (!sc.sex.empty()) row.push_back(b.male ? "1" : "0");
      if (!sc.age.empty()) row.push_back(csv::format_double(b.age));
      if (!sc.race.empty()) row.emplace_back(to_string(b.race));
      if (!sc.diabetes.empty()) row.push_back(b.diabetes ? "1" : "0");
      if (!sc.hypertension.empty()) row.push_back(b.hypertension ? "1" : "0");
      for (const auto& e : sc.extra_baseline) {
        auto it = b.extra.find(e);
        row.push_back(it == b.extra.end() ? std::string() : csv::format_double(it->second));
      }
      for (const auto& a : sc.aux) {
        auto it = v.aux.find(a);
        row.push_back(it == v.aux.end() ? std::string() : csv::format_double(it->second));
      }
      out.row(row);
    }
  }
  if (outcomes) {
    csv::Writer o(*outcomes, delim);
    o.schema({"subject_id", "event_time", "event_observed", "last_followup"});
    for (const auto& s : cohort.subjects) {
      o.row({s.id, csv::format_optional(s.event_time), s.event_observed ? "1" : "0",
             std::to_string(s.last_followup)});
    }
  }
}

bool event_indicator(const SubjectHistory& subject, int t) {
  if (!subject.event_observed || !subject.event_time || t < 0) return false;
  double et = *subject.event_time;
  return static_cast<double>(t) < et && et <= static_cast<double>(t) + 1.0;
}

std::vector<ResolvedMarker> resolve_markers(const SubjectHistory& subject, MarkerSource source) {
  std::vector<ResolvedMarker> carried(subject.visits.size());
  std::optional<double> last;
  for (std::size_t i = 0; i < subject.visits.size(); ++i) {
    const auto& m = subject.visits[i].marker;
    if (m) {
      carried[i] = {m, false};
      last = m;
    } else {
      carried[i] = {last, last.has_value()};
    }
  }
  if (source == MarkerSource::current) return carried;

  std::vector<ResolvedMarker> averaged(carried.size());
  for (std::size_t i = 0; i < carried.size(); ++i) {
    averaged[i] = carried[i];
    bool consecutive = i > 0 && subject.visits[i - 1].t == subject.visits[i].t - 1;
    if (consecutive && carried[i].value && carried[i - 1].value) {
      averaged[i].value = 0.5 * (*carried[i].value + *carried[i - 1].value);
      averaged[i].carried = carried[i].carried || carried[i - 1].carried;
    }
  }
  return averaged;
}

DoseChangeProfile dose_change_profile(const Cohort& cohort, double threshold,
                                      const std::vector<double>& edges, MarkerSource source) {
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must lie in (0, 1)");
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw ConfigError("marker bin edges must be strictly increasing with at least two values");

  DoseChangeProfile profile;
  profile.threshold = threshold;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    DoseChangeBin bin;
    bin.lo = edges[b];
    bin.hi = edges[b + 1];
    profile.bins.push_back(bin);
  }

  for (const auto& s : cohort.subjects) {
    auto markers = resolve_markers(s, source);
    for (std::size_t i = 1; i < s.visits.size(); ++i) {
      const auto& prev = s.visits[i - 1];
      const auto& cur = s.visits[i];
      if (prev.t != cur.t - 1) continue;  // not a consecutive pair
      if (!prev.dose || !cur.dose || *prev.dose <= 0) {
        ++profile.ineligible_pairs;
        continue;
      }
      const auto& m = markers[i].value;
      auto it = m ? std::upper_bound(edges.begin(), edges.end(), *m) : edges.begin();
      if (!m || it == edges.begin() || it == edges.end()) {
        ++profile.out_of_range;
        continue;
      }
      auto& bin = profile.bins[static_cast<std::size_t>(it - edges.begin()) - 1];
      double ratio = *cur.dose / *prev.dose;
      ++bin.eligible;
      if (ratio >= 1.0 + threshold)
        ++bin.increased;
      else if (ratio <= 1.0 - threshold)
        ++bin.decreased;
      else
        ++bin.maintained;
    }
  }
  for (auto& bin : profile.bins) {
    if (bin.eligible == 0) continue;
    auto n = static_cast<double>(bin.eligible);
    bin.p_increased = static_cast<double>(bin.increased) / n;
    bin.p_decreased = static_cast<double>(bin.decreased) / n;
    bin.p_maintained = static_cast<double>(bin.maintained) / n;
  }
  return profile;
}

namespace {

std::optional<bool> split_value(const SubjectHistory& s, std::string_view split_by) {
  if (split_by == "sex") return s.baseline.male;
  if (split_by == "diabetes") return s.baseline.diabetes;
  if (split_by == "hypertension") return s.baseline.hypertension;
  auto it = s.baseline.extra.find(std::string(split_by));
  if (it == s.baseline.extra.end()) return std::nullopt;
  return it->second != 0.0;
}

}  // namespace

CohortSummary summarize_cohort(const Cohort& cohort, std::string_view split_by) {
  CohortSummary summary;
  if (split_by == "sex") {
    summary.columns = {"All subjects", "Male", "Female"};
  } else {
    summary.columns = {"All subjects", std::string(split_by) + "=1", std::string(split_by) + "=0"};
  }

  std::array<std::vector<const SubjectHistory*>, 3> groups;
  for (const auto& s : cohort.subjects) {
    groups[0].push_back(&s);
    auto v = split_value(s, split_by);
    if (!v) throw ConfigError("cannot split cohort by '" + std::string(split_by) + "'");
    groups[*v ? 1 : 2].push_back(&s);
  }

  auto add_percent = [&](std::string label, auto predicate) {
    SummaryRow row{std::move(label), SummaryKind::percent, {}};
    for (std::size_t g = 0; g < 3; ++g) {
      std::size_t hits = 0;
      for (const auto* s : groups[g]) hits += predicate(*s) ? 1 : 0;
      row.cells[g].count = groups[g].size();
      if (!groups[g].empty())
        row.cells[g].value = 100.0 * static_cast<double>(hits) / static_cast<double>(groups[g].size());
    }
    summary.rows.push_back(std::move(row));
  };
  auto add_mean = [&](std::string label, auto extract) {
    SummaryRow row{std::move(label), SummaryKind::mean_sd, {}};
    for (std::size_t g = 0; g < 3; ++g) {
      std::vector<double> values;
      for (const auto* s : groups[g]) {
        std::optional<double> v = extract(*s);
        if (v) values.push_back(*v);
      }
      row.cells[g].count = values.size();
      if (!values.empty()) {
        row.cells[g].value = stats::mean(values);
        row.cells[g].sd = stats::sd(values);
      }
    }
    summary.rows.push_back(std::move(row));
  };

  SummaryRow n_row{"Subjects (n)", SummaryKind::count, {}};
  for (std::size_t g = 0; g < 3; ++g) n_row.cells[g].count = groups[g].size();
  summary.rows.push_back(n_row);

  const auto& sc = cohort.schema;
  if (!sc.sex.empty()) add_percent("Male (%)", [](const SubjectHistory& s) { return s.baseline.male; });
  if (!sc.age.empty())
    add_mean("Age (years)", [](const SubjectHistory& s) -> std::optional<double> { return s.baseline.age; });
  for (const auto& name : sc.extra_baseline) {
    add_mean(name, [&](const SubjectHistory& s) -> std::optional<double> {
      auto it = s.baseline.extra.find(name);
      if (it == s.baseline.extra.end()) return std::nullopt;
      return it->second;
    });
  }
  add_mean("Baseline marker", [](const SubjectHistory& s) -> std::optional<double> {
    return s.visits.empty() ? std::nullopt : s.visits.front().marker;
  });
  if (!sc.race.empty()) {
    for (Race r : {Race::white, Race::black, Race::other}) {
      std::string label(to_string(r));
      label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
      add_percent(label + " (%)", [r](const SubjectHistory& s) { return s.baseline.race == r; });
    }
  }
  if (!sc.diabetes.empty())
    add_percent("Diabetes (%)", [](const SubjectHistory& s) { return s.baseline.diabetes; });
  if (!sc.hypertension.empty())
    add_percent("Hypertension (%)", [](const SubjectHistory& s) { return s.baseline.hypertension; });
  return summary;
}

void write_summary(const CohortSummary& summary, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.schema({"characteristic", summary.columns[0], summary.columns[1], summary.columns[2]});
  for (const auto& row : summary.rows) {
    std::vector<std::string> fields{row.characteristic};
    for (const auto& cell : row.cells) {
      switch (row.kind) {
        case SummaryKind::count:
          fields.push_back(std::to_string(cell.count));
          break;
        case SummaryKind::percent:
          fields.push_back(cell.value ? csv::format_fixed(*cell.value, 1) : "--");
          break;
        case SummaryKind::mean_sd:
          fields.push_back(cell.value ? csv::format_fixed(*cell.value, 1) + " (" +
                                            csv::format_fixed(cell.sd.value_or(0.0), 1) + ")"
                                      : "--");
          break;
      }
    }
    w.row(fields);
  }
}

void write_dose_change_profile(const DoseChangeProfile& profile, std::ostream& out, char delim) {
  csv::Writer w(out, delim);
  w.comment("threshold: " + csv::format_double(profile.threshold) +
            "; ineligible pairs: " + std::to_string(profile.ineligible_pairs) +
            "; out of range: " + std::to_string(profile.out_of_range));
  w.schema({"x", "series", "value", "count", "eligible"});
  for (const auto& bin : profile.bins) {
    auto x = csv::format_double(0.5 * (bin.lo + bin.hi));
    auto emit = [&](const char* series, const std::optional<double>& p, std::size_t n) {
      w.row({x, series, csv::format_optional(p), std::to_string(n), std::to_string(bin.eligible)});
    };
    emit("increased", bin.p_increased, bin.increased);
    emit("decreased", bin.p_decreased, bin.decreased);
    emit("maintained", bin.p_maintained, bin.maintained);
  }
}

}  // namespace dtrclone

#include "dtrclone/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dtrclone/csv.hpp"
#include "dtrclone/error.hpp"

namespace dtrclone {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

// Numbers, or the strings "inf"/"infinity" for an unbounded factor.
double read_bound(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  throw ConfigError(where + ": expected a number or \"inf\"");
}

json write_bound(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

json design_to_json(const DesignSpec& spec) {
  json out = json::array();
  for (const auto& t : spec.terms) {
    if (t.kind == TermKind::time_spline && !t.knots.empty())
      out.push_back({{"term", t.name()}, {"knots", t.knots}});
    else
      out.push_back(t.name());
  }
  return out;
}

DesignSpec design_from_json(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected a list of terms");
  DesignSpec spec;
  for (const auto& item : v) {
    if (item.is_string()) {
      spec.terms.push_back(parse_term(item.get<std::string>()));
    } else if (item.is_object()) {
      check_keys(item, {"term", "knots"}, where);
      std::string name;
      read(item, "term", name, where);
      Term t = parse_term(name);
      read(item, "knots", t.knots, where);
      spec.terms.push_back(std::move(t));
    } else {
      throw ConfigError(where + ": terms are strings or {term, knots} objects");
    }
  }
  spec.validate();
  return spec;
}

json fit_to_json(const FitOptions& f) {
  return {{"max_iterations", f.max_iterations},
          {"coefficient_tolerance", f.coefficient_tolerance},
          {"deviance_tolerance", f.deviance_tolerance},
          {"max_step_halvings", f.max_step_halvings},
          {"separation_threshold", f.separation_threshold},
          {"rank_tolerance", f.rank_tolerance},
          {"ridge_rescue", f.ridge_rescue},
          {"ridge_scale", f.ridge_scale}};
}

FitOptions fit_from_json(const json& v, FitOptions f, const std::string& where) {
  check_keys(v, {"max_iterations", "coefficient_tolerance", "deviance_tolerance", "max_step_halvings",
                 "separation_threshold", "rank_tolerance", "ridge_rescue", "ridge_scale"},
             where);
  read(v, "max_iterations", f.max_iterations, where);
  read(v, "coefficient_tolerance", f.coefficient_tolerance, where);
  read(v, "deviance_tolerance", f.deviance_tolerance, where);
  read(v, "max_step_halvings", f.max_step_halvings, where);
  read(v, "separation_threshold", f.separation_threshold, where);
  read(v, "rank_tolerance", f.rank_tolerance, where);
  read(v, "ridge_rescue", f.ridge_rescue, where);
  read(v, "ridge_scale", f.ridge_scale, where);
  if (f.max_iterations < 1) throw ConfigError(where + ".max_iterations must be positive");
  return f;
}

json weight_spec_to_json(const WeightModelSpec& s) {
  json out{{"numerator", design_to_json(s.numerator)},
           {"denominator", design_to_json(s.denominator)},
           {"stratify_by_regimen", s.stratify_by_regimen},
           {"fit", fit_to_json(s.fit)}};
  if (s.truncation)
    out["truncation"] = {s.truncation->first, s.truncation->second};
  else
    out["truncation"] = nullptr;
  return out;
}

WeightModelSpec weight_spec_from_json(const json& v, WeightModelSpec s, const std::string& where) {
  check_keys(v, {"numerator", "denominator", "stratify_by_regimen", "truncation", "fit"}, where);
  if (v.contains("numerator")) s.numerator = design_from_json(v["numerator"], where + ".numerator");
  if (v.contains("denominator")) s.denominator = design_from_json(v["denominator"], where + ".denominator");
  read(v, "stratify_by_regimen", s.stratify_by_regimen, where);
  if (v.contains("truncation")) {
    const auto& tr = v["truncation"];
    if (tr.is_null()) {
      s.truncation.reset();
    } else if (tr.is_array() && tr.size() == 2 && tr[0].is_number() && tr[1].is_number()) {
      s.truncation = std::make_pair(tr[0].get<double>(), tr[1].get<double>());
    } else {
      throw ConfigError(where + ".truncation: expected null or [lower, upper]");
    }
  }
  if (v.contains("fit")) s.fit = fit_from_json(v["fit"], s.fit, where + ".fit");
  s.validate();
  return s;
}

json regimen_to_json(const RegimenSpec& s) {
  json p = json::array();
  for (double v : s.p) p.push_back(write_bound(v));
  return {{"id", s.id}, {"p", p}, {"b1", s.b1}, {"b2", s.b2}, {"label", s.label}};
}

RegimenSpec regimen_from_json(const json& v, const std::string& where) {
  check_keys(v, {"id", "p", "b1", "b2", "label"}, where);
  RegimenSpec s;
  if (!v.contains("id")) throw ConfigError(where + ": regimen needs an id");
  read(v, "id", s.id, where);
  if (v.contains("p")) {
    const auto& p = v["p"];
    if (!p.is_array() || p.size() != 6) throw ConfigError(where + ".p: expected six factor bounds");
    for (std::size_t i = 0; i < 6; ++i) s.p[i] = read_bound(p[i], where + ".p");
  }
  read(v, "b1", s.b1, where);
  read(v, "b2", s.b2, where);
  read(v, "label", s.label, where);
  if (s.label.empty()) s.label = "regimen " + std::to_string(s.id);
  return s;
}

RegimenGrid grid_from_json(const json& v, const std::string& where) {
  check_keys(v, {"family", "specs", "reference_id"}, where);
  if (v.contains("family") == v.contains("specs"))
    throw ConfigError(where + ": give exactly one of 'family' or 'specs'");
  RegimenGrid grid;
  if (v.contains("family")) {
    const auto& f = v["family"];
    std::string fw = where + ".family";
    check_keys(f, {"p", "x", "reference"}, fw);
    std::vector<double> ps, xs;
    std::string ref;
    read(f, "p", ps, fw);
    read(f, "x", xs, fw);
    read(f, "reference", ref, fw);
    if (ps.empty() || xs.empty()) throw ConfigError(fw + ": p and x must be nonempty");
    if (v.contains("reference_id")) throw ConfigError(where + ": family grids name the reference by label");
    grid = family_grid(ps, xs, ref);
  } else {
    const auto& specs = v["specs"];
    if (!specs.is_array()) throw ConfigError(where + ".specs: expected a list");
    for (std::size_t i = 0; i < specs.size(); ++i)
      grid.specs.push_back(regimen_from_json(specs[i], where + ".specs[" + std::to_string(i) + "]"));
    if (!v.contains("reference_id")) throw ConfigError(where + ": reference_id is required with specs");
    read(v, "reference_id", grid.reference_id, where);
    grid.validate();
  }
  return grid;
}

json schema_to_json(const CohortSchema& s) {
  return {{"subject_id", s.subject_id}, {"t", s.t},
          {"marker", s.marker},         {"dose", s.dose},
          {"sex", s.sex},               {"age", s.age},
          {"race", s.race},             {"diabetes", s.diabetes},
          {"hypertension", s.hypertension}, {"extra_baseline", s.extra_baseline},
          {"aux", s.aux}};
}

CohortSchema schema_from_json(const json& v, CohortSchema s, const std::string& where) {
  check_keys(v, {"subject_id", "t", "marker", "dose", "sex", "age", "race", "diabetes", "hypertension",
                 "extra_baseline", "aux"},
             where);
  read(v, "subject_id", s.subject_id, where);
  read(v, "t", s.t, where);
  read(v, "marker", s.marker, where);
  read(v, "dose", s.dose, where);
  read(v, "sex", s.sex, where);
  read(v, "age", s.age, where);
  read(v, "race", s.race, where);
  read(v, "diabetes", s.diabetes, where);
  read(v, "hypertension", s.hypertension, where);
  read(v, "extra_baseline", s.extra_baseline, where);
  read(v, "aux", s.aux, where);
  return s;
}

std::string marker_source_name(MarkerSource m) {
  return m == MarkerSource::current ? "current" : "two_month_average";
}

MarkerSource parse_marker_source(const std::string& s) {
  if (s == "current") return MarkerSource::current;
  if (s == "two_month_average") return MarkerSource::two_month_average;
  throw ConfigError("unknown marker source '" + s + "'");
}

json msm_to_json(const MsmRun& run) {
  json order = json::object();
  for (const auto& [id, ord] : run.spec.regimen_order) order[std::to_string(id)] = ord;
  return {{"name", run.spec.name},
          {"form", to_string(run.spec.form)},
          {"baseline_terms", design_to_json(run.spec.baseline_terms)},
          {"time_intercept", design_to_json(run.spec.time_intercept)},
          {"reference_regimen", run.spec.reference_regimen},
          {"regimen_order", order},
          {"months", run.months},
          {"weighted", run.weighted},
          {"fit", fit_to_json(run.spec.fit)}};
}

MsmRun msm_from_json(const json& v, int default_reference, const std::string& where) {
  check_keys(v, {"name", "form", "baseline_terms", "time_intercept", "reference_regimen", "regimen_order",
                 "months", "weighted", "fit"},
             where);
  MsmRun run;
  run.spec.reference_regimen = default_reference;
  read(v, "name", run.spec.name, where);
  if (v.contains("form")) {
    std::string form;
    read(v, "form", form, where);
    try {
      run.spec.form = parse_effect_form(form);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ".form: " + e.what());
    }
  }
  if (v.contains("baseline_terms"))
    run.spec.baseline_terms = design_from_json(v["baseline_terms"], where + ".baseline_terms");
  if (v.contains("time_intercept"))
    run.spec.time_intercept = design_from_json(v["time_intercept"], where + ".time_intercept");
  read(v, "reference_regimen", run.spec.reference_regimen, where);
  if (v.contains("regimen_order")) {
    const auto& order = v["regimen_order"];
    if (!order.is_object()) throw ConfigError(where + ".regimen_order: expected an object of id -> ordinal");
    for (const auto& [key, value] : order.items()) {
      long long id = 0;
      if (!csv::parse_int(key, id) || !value.is_number())
        throw ConfigError(where + ".regimen_order: bad entry '" + key + "'");
      run.spec.regimen_order[static_cast<int>(id)] = value.get<double>();
    }
  }
  read(v, "months", run.months, where);
  read(v, "weighted", run.weighted, where);
  if (v.contains("fit")) run.spec.fit = fit_from_json(v["fit"], run.spec.fit, where + ".fit");
  run.spec.validate();
  return run;
}

json parse_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void RunConfig::validate() const {
  grid.validate();
  if (start_t < 0) throw ConfigError("start_t must be nonnegative");
  if (horizon && *horizon <= start_t) throw ConfigError("horizon must exceed start_t");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
  if (input.visits.empty()) throw ConfigError("input.visits is required");
  auto known = [&](int id, const std::string& what) {
    if (!grid.contains(id)) throw ConfigError(what + " refers to unknown regimen id " + std::to_string(id));
  };
  for (const auto& [a, b] : logrank.pairs) {
    known(a, "logrank pair");
    known(b, "logrank pair");
    if (a == b) throw ConfigError("logrank pair compares regimen " + std::to_string(a) + " with itself");
  }
  std::set<std::string> names;
  for (const auto& run : msm) {
    known(run.spec.reference_regimen, "msm '" + run.spec.name + "' reference");
    for (const auto& [id, ord] : run.spec.regimen_order) known(id, "msm '" + run.spec.name + "' regimen_order");
    if (!names.insert(run.spec.name).second) throw ConfigError("duplicate msm name '" + run.spec.name + "'");
    if (run.weighted && weights.processes.empty())
      throw ConfigError("msm '" + run.spec.name + "' is weighted but no weight processes are enabled");
    if (!has_time_interaction(run.spec.form) && !run.months.empty())
      throw ConfigError("msm '" + run.spec.name + "' lists months but has no time interaction");
    for (int m : run.months) {
      if (m < start_t) throw ConfigError("msm '" + run.spec.name + "' month precedes start_t");
    }
  }
  if (logrank.weighted && !logrank.pairs.empty() && weights.processes.empty())
    throw ConfigError("weighted log-rank requested but no weight processes are enabled");
  std::set<CensoringProcess> seen;
  for (auto p : weights.processes) {
    if (!seen.insert(p).second) throw ConfigError("weight process listed twice: " + to_string(p));
  }
  weights.adherence.validate();
  weights.censoring.validate();
  // One truncation applies to the combined weight.
  const auto& ta = weights.adherence.truncation;
  const auto& tc = weights.censoring.truncation;
  if (ta && tc && *ta != *tc) throw ConfigError("adherence and censoring truncation settings disagree");
  if (!(report.dose_change_threshold > 0 && report.dose_change_threshold < 1))
    throw ConfigError("dose_change_threshold must lie in (0, 1)");
  for (std::size_t i = 1; i < report.marker_edges.size(); ++i) {
    if (!(report.marker_edges[i] > report.marker_edges[i - 1]))
      throw ConfigError("marker_edges must be strictly increasing");
  }
}

RunConfig default_run_config() {
  RunConfig c;
  c.input.visits = "visits.csv";
  c.input.outcomes = "outcomes.csv";
  c.grid = usrds_grid();
  c.weights.adherence.denominator =
      DesignSpec::parse({"intercept", "time_spline", "sex", "age", "race", "diabetes", "hypertension",
                         "prev_dose", "marker_avg_bins", "marker_diff"});
  c.weights.adherence.numerator = c.weights.adherence.denominator.baseline_only();
  c.weights.censoring = c.weights.adherence;
  for (const auto& s : c.grid.specs) {
    if (s.id != c.grid.reference_id) c.logrank.pairs.emplace_back(s.id, c.grid.reference_id);
  }
  auto baseline = DesignSpec::parse({"sex", "age", "race", "diabetes", "hypertension"});
  auto add = [&](const std::string& name, EffectForm form, std::vector<int> months) {
    MsmRun run;
    run.spec.name = name;
    run.spec.form = form;
    run.spec.baseline_terms = baseline;
    run.spec.reference_regimen = c.grid.reference_id;
    run.months = std::move(months);
    c.msm.push_back(std::move(run));
  };
  add("linear", EffectForm::linear, {});
  add("factor", EffectForm::factor, {});
  add("linear_logtime", EffectForm::linear_x_logtime, {3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  add("factor_logtime", EffectForm::factor_x_logtime, {9});
  for (double e = 24; e <= 44; e += 2) c.report.marker_edges.push_back(e);
  return c;
}

RunConfig parse_run_config(const std::string& json_text) {
  json v = parse_text(json_text, "run config");
  check_keys(v, {"input", "start_t", "horizon", "marker_source", "censor_on_missing_marker", "regimens",
                 "weights", "logrank", "msm", "report", "output_dir", "seed"},
             "config");
  RunConfig c = default_run_config();
  if (v.contains("input")) {
    const auto& in = v["input"];
    check_keys(in, {"visits", "outcomes", "delimiter", "schema"}, "input");
    read(in, "visits", c.input.visits, "input");
    read(in, "outcomes", c.input.outcomes, "input");
    if (in.contains("delimiter")) {
      std::string d;
      read(in, "delimiter", d, "input");
      if (d.size() != 1) throw ConfigError("input.delimiter must be one character");
      c.input.delimiter = d[0];
    }
    if (in.contains("schema")) c.input.schema = schema_from_json(in["schema"], c.input.schema, "input.schema");
  }
  read(v, "start_t", c.start_t, "config");
  if (v.contains("horizon")) {
    if (v["horizon"].is_null())
      c.horizon.reset();
    else {
      int h = 0;
      read(v, "horizon", h, "config");
      c.horizon = h;
    }
  }
  if (v.contains("marker_source")) {
    std::string m;
    read(v, "marker_source", m, "config");
    c.trace.marker_source = parse_marker_source(m);
  }
  read(v, "censor_on_missing_marker", c.trace.censor_on_missing_marker, "config");
  bool grid_given = v.contains("regimens");
  if (grid_given) c.grid = grid_from_json(v["regimens"], "regimens");
  if (v.contains("weights")) {
    const auto& w = v["weights"];
    check_keys(w, {"processes", "adherence", "censoring"}, "weights");
    if (w.contains("processes")) {
      std::vector<std::string> names;
      read(w, "processes", names, "weights");
      c.weights.processes.clear();
      for (const auto& n : names) c.weights.processes.push_back(parse_process(n));
    }
    if (w.contains("adherence"))
      c.weights.adherence = weight_spec_from_json(w["adherence"], c.weights.adherence, "weights.adherence");
    if (w.contains("censoring"))
      c.weights.censoring = weight_spec_from_json(w["censoring"], c.weights.censoring, "weights.censoring");
  }
  if (v.contains("logrank")) {
    const auto& l = v["logrank"];
    check_keys(l, {"pairs", "weighted"}, "logrank");
    if (l.contains("pairs")) {
      c.logrank.pairs.clear();
      for (const auto& p : l["pairs"]) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
          throw ConfigError("logrank.pairs: each pair is [regimen id, regimen id]");
        c.logrank.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
      }
    } else if (grid_given) {
      c.logrank.pairs.clear();
      for (const auto& s : c.grid.specs) {
        if (s.id != c.grid.reference_id) c.logrank.pairs.emplace_back(s.id, c.grid.reference_id);
      }
    }
    read(l, "weighted", c.logrank.weighted, "logrank");
  } else if (grid_given) {
    c.logrank.pairs.clear();
    for (const auto& s : c.grid.specs) {
      if (s.id != c.grid.reference_id) c.logrank.pairs.emplace_back(s.id, c.grid.reference_id);
    }
  }
  if (v.contains("msm")) {
    const auto& m = v["msm"];
    if (!m.is_array()) throw ConfigError("msm: expected a list of models");
    c.msm.clear();
    for (std::size_t i = 0; i < m.size(); ++i)
      c.msm.push_back(msm_from_json(m[i], c.grid.reference_id, "msm[" + std::to_string(i) + "]"));
  } else if (grid_given) {
    for (auto& run : c.msm) run.spec.reference_regimen = c.grid.reference_id;
  }
  if (v.contains("report")) {
    const auto& r = v["report"];
    check_keys(r, {"dose_change_threshold", "marker_edges", "summary_split"}, "report");
    read(r, "dose_change_threshold", c.report.dose_change_threshold, "report");
    read(r, "marker_edges", c.report.marker_edges, "report");
    read(r, "summary_split", c.report.summary_split, "report");
  }
  read(v, "output_dir", c.output_dir, "config");
  read(v, "seed", c.seed, "config");
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(slurp(path)); }

std::string dump_run_config(const RunConfig& c) {
  json regimens = json::array();
  for (const auto& s : c.grid.specs) regimens.push_back(regimen_to_json(s));
  json pairs = json::array();
  for (const auto& [a, b] : c.logrank.pairs) pairs.push_back({a, b});
  json msm = json::array();
  for (const auto& run : c.msm) msm.push_back(msm_to_json(run));
  json processes = json::array();
  for (auto p : c.weights.processes) processes.push_back(to_string(p));
  json v{{"input",
          {{"visits", c.input.visits},
           {"outcomes", c.input.outcomes},
           {"delimiter", std::string(1, c.input.delimiter)},
           {"schema", schema_to_json(c.input.schema)}}},
         {"start_t", c.start_t},
         {"horizon", c.horizon ? json(*c.horizon) : json(nullptr)},
         {"marker_source", marker_source_name(c.trace.marker_source)},
         {"censor_on_missing_marker", c.trace.censor_on_missing_marker},
         {"regimens", {{"specs", regimens}, {"reference_id", c.grid.reference_id}}},
         {"weights",
          {{"processes", processes},
           {"adherence", weight_spec_to_json(c.weights.adherence)},
           {"censoring", weight_spec_to_json(c.weights.censoring)}}},
         {"logrank", {{"pairs", pairs}, {"weighted", c.logrank.weighted}}},
         {"msm", msm},
         {"report",
          {{"dose_change_threshold", c.report.dose_change_threshold},
           {"marker_edges", c.report.marker_edges},
           {"summary_split", c.report.summary_split}}},
         {"output_dir", c.output_dir},
         {"seed", c.seed}};
  return v.dump(2) + "\n";
}

SimConfig parse_sim_config(const std::string& json_text) {
  json v = parse_text(json_text, "simulation config");
  const std::string w = "simulation";
  check_keys(v, {"scenario", "K", "n_k", "target_hr", "ref_regimen", "coadherence", "bias_level",
                 "gamma_moderate", "gamma_severe", "biased_targets", "theta", "v_mean", "v_sd", "lambda_ref",
                 "horizon", "replications", "seed", "marginal_truth", "comparisons"},
             w);
  SimConfig c = scenario_config(BiasLevel::none);
  if (v.contains("scenario")) {
    std::string s;
    read(v, "scenario", s, w);
    c = scenario_config(parse_bias_level(s));
  }
  read(v, "K", c.K, w);
  read(v, "n_k", c.n_k, w);
  read(v, "target_hr", c.target_hr, w);
  read(v, "ref_regimen", c.ref_regimen, w);
  read(v, "coadherence", c.coadherence, w);
  if (v.contains("bias_level")) {
    std::string s;
    read(v, "bias_level", s, w);
    c.bias_level = parse_bias_level(s);
  }
  read(v, "gamma_moderate", c.gamma_moderate, w);
  read(v, "gamma_severe", c.gamma_severe, w);
  read(v, "biased_targets", c.biased_targets, w);
  read(v, "theta", c.theta, w);
  read(v, "v_mean", c.v_mean, w);
  read(v, "v_sd", c.v_sd, w);
  read(v, "lambda_ref", c.lambda_ref, w);
  read(v, "horizon", c.horizon, w);
  read(v, "replications", c.replications, w);
  read(v, "seed", c.seed, w);
  read(v, "marginal_truth", c.marginal_truth, w);
  read(v, "comparisons", c.comparisons, w);
  c.validate();
  return c;
}

SimConfig load_sim_config(const std::string& path) { return parse_sim_config(slurp(path)); }

std::string dump_sim_config(const SimConfig& c) {
  json v{{"K", c.K},
         {"n_k", c.n_k},
         {"target_hr", c.target_hr},
         {"ref_regimen", c.ref_regimen},
         {"coadherence", c.coadherence},
         {"bias_level", to_string(c.bias_level)},
         {"gamma_moderate", c.gamma_moderate},
         {"gamma_severe", c.gamma_severe},
         {"biased_targets", c.biased_targets},
         {"theta", c.theta},
         {"v_mean", c.v_mean},
         {"v_sd", c.v_sd},
         {"lambda_ref", c.lambda_ref},
         {"horizon", c.horizon},
         {"replications", c.replications},
         {"seed", c.seed},
         {"marginal_truth", c.marginal_truth},
         {"comparisons", c.comparisons}};
  return v.dump(2) + "\n";
}

SynthCohortConfig parse_synth_config(const std::string& json_text) {
  json v = parse_text(json_text, "synthetic cohort config");
  const std::string w = "synth";
  check_keys(v, {"n", "months", "p", "target_lo", "target_hi", "plateau", "marker_effect", "base_hazard",
                 "frailty_effect", "dose_response", "marker_noise", "deviation_prob", "ltfu", "seed"},
             w);
  SynthCohortConfig c;
  read(v, "n", c.n, w);
  read(v, "months", c.months, w);
  read(v, "p", c.p, w);
  read(v, "target_lo", c.target_lo, w);
  read(v, "target_hi", c.target_hi, w);
  read(v, "plateau", c.plateau, w);
  read(v, "marker_effect", c.marker_effect, w);
  read(v, "base_hazard", c.base_hazard, w);
  read(v, "frailty_effect", c.frailty_effect, w);
  read(v, "dose_response", c.dose_response, w);
  read(v, "marker_noise", c.marker_noise, w);
  read(v, "deviation_prob", c.deviation_prob, w);
  read(v, "ltfu", c.ltfu, w);
  read(v, "seed", c.seed, w);
  if (c.n < 1 || c.months < 1) throw ConfigError("synth: n and months must be positive");
  return c;
}

std::string dump_synth_config(const SynthCohortConfig& c) {
  json v{{"n", c.n},
         {"months", c.months},
         {"p", c.p},
         {"target_lo", c.target_lo},
         {"target_hi", c.target_hi},
         {"plateau", c.plateau},
         {"marker_effect", c.marker_effect},
         {"base_hazard", c.base_hazard},
         {"frailty_effect", c.frailty_effect},
         {"dose_response", c.dose_response},
         {"marker_noise", c.marker_noise},
         {"deviation_prob", c.deviation_prob},
         {"ltfu", c.ltfu},
         {"seed", c.seed}};
  return v.dump(2) + "\n";
}

}  // namespace dtrclone

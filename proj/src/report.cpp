#include "mcms/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mcms/descriptives.hpp"
#include "mcms/efa.hpp"
#include "mcms/errors.hpp"
#include "mcms/model_spec.hpp"

namespace mcms {

using nlohmann::json;

std::map<std::string, std::string> default_income_map() {
  return {{"USA", "HIGH"}, {"DEU", "HIGH"}, {"ESP", "HIGH"},
          {"BRA", "MID"},  {"RUS", "MID"},  {"MEX", "MID"},
          {"IND", "LOW"},  {"IDN", "LOW"},  {"PHL", "LOW"}};
}

namespace {

std::string fmt(double v, int decimals) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string pad(const std::string& s, size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_json(const Matrix& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) {
      if (std::isnan(m(i, j)))
        row.push_back(nullptr);
      else
        row.push_back(m(i, j));
    }
    out.push_back(row);
  }
  return out;
}

std::string multiplier_name(ChisqMultiplier m) {
  return m == ChisqMultiplier::NMinus1 ? "n-1" : "n";
}

std::string decision_mode_name(DecisionMode m) {
  return m == DecisionMode::CfiOnly ? "cfi-only" : "conjunctive";
}

}  // namespace

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  json j;
  j["scale_file"] = cfg.scale_file;
  j["response_files"] = cfg.response_files;
  json rules;
  rules["expected_test_answers"] = cfg.spam_rules.expected_test_answers;
  rules["attention_required"] = to_string(cfg.spam_rules.attention_required);
  rules["n_attention_options"] = cfg.spam_rules.n_attention_options;
  j["spam_rules"] = rules;
  j["model"] = {{"restricted_correlations", cfg.restricted_correlations},
                {"use_scaled", cfg.use_scaled},
                {"chisq_multiplier", multiplier_name(cfg.multiplier)},
                {"decision_mode", decision_mode_name(cfg.decision_mode)}};
  json groups;
  switch (cfg.groups.mode) {
    case GroupSelection::Mode::Labels: groups["mode"] = "labels"; break;
    case GroupSelection::Mode::Map: groups["mode"] = "map"; break;
    case GroupSelection::Mode::Pooled: groups["mode"] = "pooled"; break;
  }
  groups["label_map"] = cfg.groups.label_map;
  groups["exclude"] = cfg.groups.exclude;
  groups["pooled_label"] = cfg.groups.pooled_label;
  j["groups"] = groups;
  j["run_efa"] = cfg.run_efa;
  j["run_invariance"] = cfg.run_invariance;
  j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("pipeline config is not valid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  cfg.scale_file = j.value("scale_file", std::string());
  if (j.contains("response_files"))
    cfg.response_files = j["response_files"].get<std::vector<std::string>>();
  if (j.contains("spam_rules")) {
    const auto& r = j["spam_rules"];
    if (r.contains("expected_test_answers")) {
      cfg.spam_rules.expected_test_answers.clear();
      for (const auto& [k, v] : r["expected_test_answers"].items())
        cfg.spam_rules.expected_test_answers[k] = v.get<int>();
    }
    cfg.spam_rules.attention_required =
        attention_from_string(r.value("attention_required", "Yes"));
    cfg.spam_rules.n_attention_options = r.value("n_attention_options", 3);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    cfg.restricted_correlations = m.value("restricted_correlations", false);
    cfg.use_scaled = m.value("use_scaled", true);
    cfg.multiplier = m.value("chisq_multiplier", "n-1") == std::string("n")
                         ? ChisqMultiplier::N
                         : ChisqMultiplier::NMinus1;
    const std::string mode = m.value("decision_mode", "cfi-only");
    cfg.decision_mode =
        mode == "conjunctive" ? DecisionMode::Conjunctive : DecisionMode::CfiOnly;
  }
  if (j.contains("groups")) {
    const auto& g = j["groups"];
    const std::string mode = g.value("mode", "labels");
    if (mode == "map")
      cfg.groups.mode = GroupSelection::Mode::Map;
    else if (mode == "pooled")
      cfg.groups.mode = GroupSelection::Mode::Pooled;
    else
      cfg.groups.mode = GroupSelection::Mode::Labels;
    if (g.contains("label_map"))
      for (const auto& [k, v] : g["label_map"].items())
        cfg.groups.label_map[k] = v.get<std::string>();
    if (g.contains("exclude"))
      cfg.groups.exclude = g["exclude"].get<std::vector<std::string>>();
    cfg.groups.pooled_label = g.value("pooled_label", "ALL");
  }
  cfg.run_efa = j.value("run_efa", true);
  cfg.run_invariance = j.value("run_invariance", true);
  cfg.out_dir = j.value("out_dir", std::string());
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open pipeline config: " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return pipeline_config_from_json(buf.str());
}

namespace {

struct StageData {
  ScaleDefinition def;
  std::vector<ResponseRecord> clean;
  IngestSummary summary;
  long rejected_rows = 0;
  std::string rejected_log;
  std::map<std::string, ResponseMatrix> group_matrices;  // selected grouping
  ResponseMatrix pooled;                                 // all selected records
};

StageData run_ingest_stages(const PipelineConfig& cfg) {
  StageData st;
  st.def = cfg.scale_file.empty() ? builtin_mcms() : load_scale(cfg.scale_file);
  const auto violations = validate_scale(st.def);
  if (!violations.empty()) throw ConfigError("invalid scale definition: " + violations.front());
  if (cfg.response_files.empty()) throw ConfigError("no response files configured");

  std::vector<ResponseRecord> records;
  for (const auto& file : cfg.response_files) {
    ParseResult parsed = parse_responses(file, st.def);
    st.rejected_rows += static_cast<long>(parsed.rejected.size());
    st.rejected_log += rejection_log(parsed.rejected);
    records.insert(records.end(), parsed.records.begin(), parsed.records.end());
  }
  FilterOutcome filtered = apply_spam_filter(records, cfg.spam_rules);
  st.summary = filtered.summary;

  // group selection
  std::vector<ResponseRecord> selected;
  const auto excluded = [&](const std::string& label) {
    return std::find(cfg.groups.exclude.begin(), cfg.groups.exclude.end(), label) !=
           cfg.groups.exclude.end();
  };
  std::map<std::string, std::string> label_map = cfg.groups.label_map;
  if (cfg.groups.mode == GroupSelection::Mode::Map && label_map.empty())
    label_map = default_income_map();
  for (auto& rec : filtered.clean) {
    if (excluded(rec.group)) continue;
    ResponseRecord r = rec;
    switch (cfg.groups.mode) {
      case GroupSelection::Mode::Labels: break;
      case GroupSelection::Mode::Map: {
        auto it = label_map.find(rec.group);
        if (it == label_map.end()) continue;  // unmapped labels are dropped
        r.group = it->second;
        break;
      }
      case GroupSelection::Mode::Pooled: r.group = cfg.groups.pooled_label; break;
    }
    selected.push_back(std::move(r));
  }
  if (selected.empty()) throw ConfigError("group selection left no records to analyze");
  st.group_matrices = split_groups(selected, st.def);
  st.pooled = pool_records(selected, st.def, cfg.groups.pooled_label);
  return st;
}

json cfa_block(const ScaleDefinition& def, const FactorModelSpec& spec,
               const ResponseMatrix& m, const PipelineConfig& cfg, bool with_parameters) {
  const SampleMoments moments = compute_sample_moments(m, cfg.use_scaled);
  FitOptions fopt;
  fopt.multiplier = cfg.multiplier;
  FitResult fit = fit_model(spec, moments, fopt);
  apply_fit_indices(fit, {moments}, cfg.use_scaled);
  if (cfg.use_scaled) apply_robust_se(fit, {moments});

  json out;
  out["n"] = moments.n;
  out["converged"] = fit.converged;
  out["identified"] = fit.identified;
  out["fmin"] = fit.fmin;
  out["chisq"] = fit.indices.chisq;
  out["df"] = fit.indices.df;
  if (cfg.use_scaled) {
    out["chisq_sb"] = fit.indices.chisq_sb;
    out["sb_scale"] = fit.indices.sb_scale;
  }
  out["cfi"] = fit.indices.cfi;
  out["tli"] = fit.indices.tli;
  out["rmsea"] = fit.indices.rmsea;
  out["rmsea_lo"] = fit.indices.rmsea_lo;
  out["rmsea_hi"] = fit.indices.rmsea_hi;
  out["srmr"] = fit.indices.srmr;

  if (with_parameters) {
    out["theta_labels"] = fit.model->theta_labels;
    out["theta"] = vector_json(fit.theta);
    if (fit.se_normal.size() > 0) {
      out["se_normal"] = vector_json(fit.se_normal);
      out["se_robust"] = vector_json(fit.se_robust);
    }
    Matrix lambda, phi;
    Vector theta_diag, tau, kappa;
    fit.model->materialize(0, fit.theta, lambda, phi, theta_diag, tau, kappa);
    json params;
    params["items"] = def.flattened_items();
    json lam = json::array(), intercepts = json::array();
    const auto items = def.flattened_items();
    for (size_t i = 0; i < items.size(); ++i) {
      const FactorDef* f = def.factor_of(items[i]);
      const int fi = def.factor_index(f->name);
      lam.push_back(lambda(static_cast<int>(i), fi));
      intercepts.push_back(fit.model->mean_structure ? tau[static_cast<int>(i)] : 0.0);
    }
    params["lambda"] = lam;
    params["tau"] = intercepts;
    out["parameters"] = params;

    const int q = static_cast<int>(def.factors.size());
    Matrix corr(q, q);
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b)
        corr(a, b) = phi(a, b) / std::sqrt(phi(a, a) * phi(b, b));
    out["factor_correlations"] = matrix_json(corr);
  }
  return out;
}

}  // namespace

namespace {

// tag exceptions with the stage that raised them
template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + " stage: " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(std::string(name) + " stage: " + e.what());
  } catch (const Error& e) {
    throw Error(std::string(name) + " stage: " + e.what());
  }
}

}  // namespace

json build_master_document(const PipelineConfig& cfg) {
  StageData st = stage("ingest", [&] { return run_ingest_stages(cfg); });
  const std::vector<std::string> factor_names = [&] {
    std::vector<std::string> names;
    for (const auto& f : st.def.factors) names.push_back(f.name);
    return names;
  }();

  json master;
  master["schema_version"] = "1";
  master["config"] = json::parse(pipeline_config_to_json(cfg));
  master["scale"] = json::parse(scale_to_json(st.def));

  // ingest summary
  json ingest;
  ingest["n_raw"] = st.summary.n_raw;
  ingest["n_clean"] = st.summary.n_clean;
  ingest["spam_rate"] = st.summary.spam_rate;
  ingest["rejected_rows"] = st.rejected_rows;
  json per_group = json::object();
  for (const auto& [label, counts] : st.summary.per_group) {
    per_group[label] = {{"n_raw", counts.n_raw},
                        {"n_clean", counts.n_clean},
                        {"spam_rate", counts.n_raw == 0
                                          ? 0.0
                                          : 1.0 - static_cast<double>(counts.n_clean) /
                                                      counts.n_raw}};
  }
  ingest["per_group"] = per_group;
  ingest["rejected_log"] = st.rejected_log;
  master["ingest"] = ingest;

  // descriptives per analysis group plus the pooled sample
  json desc;
  json desc_groups = json::object();
  auto describe_group = [&](const ResponseMatrix& m) {
    json g;
    const CompositeStats cs = composite_stats(m, st.def);
    json comp = json::object();
    for (size_t f = 0; f < factor_names.size(); ++f)
      comp[factor_names[f]] = {{"mean", cs.mean[static_cast<int>(f)]},
                               {"sd", cs.sd[static_cast<int>(f)]}};
    g["composite"] = comp;
    json alphas = json::object();
    for (const auto& fname : factor_names) {
      const AlphaEstimate a = cronbach_alpha(m, st.def, fname);
      alphas[fname] = {{"alpha", a.alpha},
                       {"ci_low", a.ci_low},
                       {"ci_high", a.ci_high},
                       {"k", a.k},
                       {"n", a.n}};
    }
    g["alpha"] = alphas;
    g["n"] = m.n();
    return g;
  };
  for (const auto& [label, m] : st.group_matrices) desc_groups[label] = describe_group(m);
  if (st.group_matrices.size() > 1)
    desc_groups[st.pooled.group] = describe_group(st.pooled);
  desc["groups"] = desc_groups;
  const CompositeCorrelations cc =
      stage("descriptives", [&] { return composite_correlations(st.pooled, st.def); });
  desc["correlations"] = {{"factors", cc.factors},
                          {"r", matrix_json(cc.corr)},
                          {"p", matrix_json(cc.p_values)},
                          {"n", cc.n},
                          {"group", st.pooled.group}};
  master["descriptives"] = desc;

  // EFA on the pooled sample
  if (cfg.run_efa) {
    const EfaSolution efa = stage("efa", [&] {
      const SampleMoments pooled_moments = compute_sample_moments(st.pooled, false);
      return rotate_promax(extract_factors(pooled_moments, static_cast<int>(factor_names.size())));
    });
    master["efa"] = {{"items", efa.items},
                     {"pattern", matrix_json(efa.loadings)},
                     {"factor_correlations", matrix_json(efa.factor_correlations)},
                     {"communalities", vector_json(efa.communalities)},
                     {"heywood", efa.heywood},
                     {"iterations", efa.iterations}};
  }

  // CFA per group and pooled
  ModelOptions mopt;
  mopt.mean_structure = true;
  if (cfg.restricted_correlations) {
    // zero covariances between both external regulation factors and intrinsic
    // motivation, mirroring the restricted comparison model
    const auto has = [&](const std::string& name) {
      return st.def.factor_index(name) >= 0;
    };
    if (has("Material External Regulation") && has("Intrinsic Motivation"))
      mopt.zero_factor_covariances.push_back(
          {"Material External Regulation", "Intrinsic Motivation"});
    if (has("Social External Regulation") && has("Intrinsic Motivation"))
      mopt.zero_factor_covariances.push_back(
          {"Social External Regulation", "Intrinsic Motivation"});
  }
  const FactorModelSpec spec = compile_model(st.def, mopt);

  json cfa;
  json cfa_groups = json::object();
  cfa_groups[st.pooled.group] =
      stage("cfa", [&] { return cfa_block(st.def, spec, st.pooled, cfg, true); });
  std::vector<std::string> order = {st.pooled.group};
  if (st.group_matrices.size() > 1) {
    for (const auto& [label, m] : st.group_matrices) {
      cfa_groups[label] = stage("cfa", [&] { return cfa_block(st.def, spec, m, cfg, false); });
      order.push_back(label);
    }
  }
  cfa["groups"] = cfa_groups;
  cfa["order"] = order;
  cfa["df"] = model_df(spec);
  master["cfa"] = cfa;

  // invariance ladder over the selected groups
  if (cfg.run_invariance && st.group_matrices.size() > 1) {
    std::map<std::string, SampleMoments> group_moments;
    for (const auto& [label, m] : st.group_matrices)
      group_moments.emplace(label, compute_sample_moments(m, cfg.use_scaled));
    LadderOptions lopt;
    lopt.fit.multiplier = cfg.multiplier;
    lopt.use_scaled = cfg.use_scaled;
    lopt.mode = cfg.decision_mode;
    const InvarianceReport rep =
        stage("invariance", [&] { return run_invariance_ladder(spec, group_moments, lopt); });

    json inv;
    inv["mode"] = decision_mode_name(rep.mode);
    json levels = json::array();
    for (const auto& lv : rep.levels) {
      json e;
      e["name"] = lv.name;
      e["cfi"] = lv.indices.cfi;
      e["rmsea"] = lv.indices.rmsea;
      e["chisq"] = lv.indices.chisq;
      if (lv.indices.scaled) e["chisq_sb"] = lv.indices.chisq_sb;
      e["df"] = lv.indices.df;
      e["n_free"] = lv.n_free;
      e["converged"] = lv.converged;
      if (lv.has_delta) {
        e["cfi_delta"] = lv.cfi_delta;
        e["rmsea_delta"] = lv.rmsea_delta;
        e["invariant"] = lv.invariant;
      }
      levels.push_back(e);
    }
    inv["levels"] = levels;
    inv["freed_intercepts"] = rep.freed_intercepts;
    inv["scalar_achieved"] = rep.scalar_achieved;
    inv["notes"] = rep.notes;
    if (rep.has_means) {
      inv["latent_means"] = {{"groups", rep.means.groups},
                             {"factors", rep.means.factors},
                             {"kappa", matrix_json(rep.means.kappa)},
                             {"se_robust", matrix_json(rep.means.se_robust)},
                             {"reference", rep.means.reference_group}};
    }
    master["invariance"] = inv;
  }
  return master;
}

// rejected_records.log is written alongside but is not one of the tables
std::vector<std::string> report_artifact_names() {
  return {"ingest_summary.txt", "descriptives.txt",        "cfa_fit.txt",
          "cfa_parameters.txt", "factor_correlations.txt", "invariance.txt",
          "master.json"};
}

bool validate_master(const json& master, std::string* error) {
  const auto fail = [&](const std::string& msg) {
    if (error) *error = msg;
    return false;
  };
  if (!master.is_object()) return fail("master document is not an object");
  if (master.value("schema_version", "") != "1") return fail("unknown schema_version");
  for (const char* key : {"config", "scale", "ingest", "descriptives", "cfa"})
    if (!master.contains(key)) return fail(std::string("missing section ") + key);
  if (!master["ingest"].contains("n_raw") || !master["ingest"].contains("n_clean"))
    return fail("ingest section incomplete");
  if (!master["cfa"].contains("groups") || !master["cfa"].contains("order"))
    return fail("cfa section incomplete");
  for (const auto& label : master["cfa"]["order"]) {
    const std::string l = label.get<std::string>();
    if (!master["cfa"]["groups"].contains(l)) return fail("cfa order references " + l);
    for (const char* k : {"n", "chisq", "df", "cfi", "tli", "rmsea", "srmr"})
      if (!master["cfa"]["groups"][l].contains(k))
        return fail("cfa group " + l + " lacks " + k);
  }
  if (!master["descriptives"].contains("groups") ||
      !master["descriptives"].contains("correlations"))
    return fail("descriptives section incomplete");
  if (master.contains("invariance")) {
    if (!master["invariance"].contains("levels")) return fail("invariance lacks levels");
    for (const auto& lv : master["invariance"]["levels"])
      for (const char* k : {"name", "cfi", "rmsea", "df"})
        if (!lv.contains(k)) return fail("invariance level lacks " + std::string(k));
  }
  if (error) error->clear();
  return true;
}

std::map<std::string, std::string> render_report(const json& master) {
  std::string err;
  if (!validate_master(master, &err)) throw ConfigError("invalid master document: " + err);

  std::map<std::string, std::string> out;
  const std::vector<std::string> factors =
      master["descriptives"]["correlations"]["factors"].get<std::vector<std::string>>();

  {  // ingest summary
    std::ostringstream os;
    os << "Sample sizes and spam rates\n";
    os << pad("group", 12) << pad("n_raw", 8) << pad("spam", 8) << "n_clean\n";
    const auto& ing = master["ingest"];
    os << pad("TOTAL", 12) << pad(std::to_string(ing["n_raw"].get<long>()), 8)
       << pad(fmt(100.0 * ing["spam_rate"].get<double>(), 0) + " %", 8)
       << ing["n_clean"].get<long>() << "\n";
    for (const auto& [label, g] : ing["per_group"].items())
      os << pad(label, 12) << pad(std::to_string(g["n_raw"].get<long>()), 8)
         << pad(fmt(100.0 * g["spam_rate"].get<double>(), 0) + " %", 8)
         << g["n_clean"].get<long>() << "\n";
    os << "rejected malformed rows: " << ing["rejected_rows"].get<long>() << "\n";
    out["ingest_summary.txt"] = os.str();
    out["rejected_records.log"] = ing.value("rejected_log", std::string());
  }

  {  // descriptives: composite means/sds, alphas, composite correlations
    std::ostringstream os;
    os << "Composite means and standard deviations\n";
    os << pad("group", 12);
    for (const auto& f : factors) os << pad(f.substr(0, 14), 16);
    os << "\n";
    for (const auto& [label, g] : master["descriptives"]["groups"].items()) {
      os << pad(label, 12);
      for (const auto& f : factors) {
        const auto& c = g["composite"][f];
        os << pad(fmt(c["mean"].get<double>(), 2) + " (" + fmt(c["sd"].get<double>(), 2) + ")",
                  16);
      }
      os << "\n";
    }
    os << "\nInternal consistency (alpha with 95% CI)\n";
    os << pad("group", 12);
    for (const auto& f : factors) os << pad(f.substr(0, 16), 20);
    os << "\n";
    for (const auto& [label, g] : master["descriptives"]["groups"].items()) {
      os << pad(label, 12);
      for (const auto& f : factors) {
        const auto& a = g["alpha"][f];
        os << pad(fmt(a["alpha"].get<double>(), 2) + " [" + fmt(a["ci_low"].get<double>(), 2) +
                      ", " + fmt(a["ci_high"].get<double>(), 2) + "]",
                  20);
      }
      os << "\n";
    }
    const auto& corr = master["descriptives"]["correlations"];
    os << "\nComposite Pearson correlations (" << corr["group"].get<std::string>()
       << ", n=" << corr["n"].get<long>() << ")\n";
    os << pad("", 14);
    for (size_t j = 0; j + 1 < factors.size(); ++j) os << pad(factors[j].substr(0, 10), 12);
    os << "\n";
    for (size_t i = 1; i < factors.size(); ++i) {
      os << pad(factors[i].substr(0, 12), 14);
      for (size_t j = 0; j < i; ++j) {
        const auto& cell = corr["r"][i][j];
        os << pad(cell.is_null() ? "n/a" : fmt(cell.get<double>(), 2), 12);
      }
      os << "\n";
    }
    out["descriptives.txt"] = os.str();
  }

  {  // CFA fit table
    std::ostringstream os;
    const bool scaled = master["config"]["model"]["use_scaled"].get<bool>();
    os << "Confirmatory factor analysis fit\n";
    os << pad("group", 12) << pad("N", 8) << pad(scaled ? "S-B chisq" : "chisq", 12)
       << pad("df", 6) << pad("CFI", 8) << pad("TLI", 8) << pad("RMSEA", 8)
       << pad("RMSEA 90% CI", 16) << "SRMR\n";
    for (const auto& label : master["cfa"]["order"]) {
      const auto& g = master["cfa"]["groups"][label.get<std::string>()];
      const double stat =
          scaled ? g["chisq_sb"].get<double>() : g["chisq"].get<double>();
      os << pad(label.get<std::string>(), 12) << pad(std::to_string(g["n"].get<long>()), 8)
         << pad(fmt(stat, 2), 12) << pad(std::to_string(g["df"].get<int>()), 6)
         << pad(fmt(g["cfi"].get<double>(), 3), 8) << pad(fmt(g["tli"].get<double>(), 3), 8)
         << pad(fmt(g["rmsea"].get<double>(), 3), 8)
         << pad(fmt(g["rmsea_lo"].get<double>(), 3) + " ; " +
                    fmt(g["rmsea_hi"].get<double>(), 3),
                16)
         << fmt(g["srmr"].get<double>(), 3) << "\n";
    }
    out["cfa_fit.txt"] = os.str();
  }

  {  // parameter table (pooled fit)
    std::ostringstream os;
    const std::string pooled = master["cfa"]["order"][0].get<std::string>();
    const auto& g = master["cfa"]["groups"][pooled];
    os << "Estimated loadings and intercepts (" << pooled << ")\n";
    os << pad("item", 10) << pad("lambda", 10) << "tau\n";
    const auto& params = g["parameters"];
    const auto items = params["items"].get<std::vector<std::string>>();
    for (size_t i = 0; i < items.size(); ++i)
      os << pad(items[i], 10) << pad(fmt(params["lambda"][i].get<double>(), 3), 10)
         << fmt(params["tau"][i].get<double>(), 3) << "\n";
    out["cfa_parameters.txt"] = os.str();
  }

  {  // factor correlation table (pooled fit)
    std::ostringstream os;
    const std::string pooled = master["cfa"]["order"][0].get<std::string>();
    const auto& corr = master["cfa"]["groups"][pooled]["factor_correlations"];
    os << "Model-estimated factor correlations (" << pooled << ")\n";
    os << pad("", 14);
    for (size_t j = 0; j + 1 < factors.size(); ++j) os << pad(factors[j].substr(0, 10), 12);
    os << "\n";
    for (size_t i = 1; i < factors.size(); ++i) {
      os << pad(factors[i].substr(0, 12), 14);
      for (size_t j = 0; j < i; ++j) os << pad(fmt(corr[i][j].get<double>(), 3), 12);
      os << "\n";
    }
    out["factor_correlations.txt"] = os.str();
  }

  {  // invariance ladder
    std::ostringstream os;
    if (!master.contains("invariance")) {
      os << "Measurement invariance: not run (fewer than 2 groups configured)\n";
    } else {
      const auto& inv = master["invariance"];
      os << "Measurement invariance (" << inv["mode"].get<std::string>() << ")\n";
      os << pad("level", 18) << pad("CFI", 8) << pad("CFI d", 8) << pad("RMSEA", 8)
         << pad("RMSEA d", 9) << "decision\n";
      for (const auto& lv : inv["levels"]) {
        os << pad(lv["name"].get<std::string>(), 18)
           << pad(fmt(lv["cfi"].get<double>(), 3), 8)
           << pad(lv.contains("cfi_delta") ? fmt(lv["cfi_delta"].get<double>(), 3) : "n/a", 8)
           << pad(fmt(lv["rmsea"].get<double>(), 3), 8)
           << pad(lv.contains("rmsea_delta") ? fmt(lv["rmsea_delta"].get<double>(), 3) : "n/a",
                  9)
           << (lv.contains("invariant")
                   ? (lv["invariant"].get<bool>() ? "invariant" : "non-invariant")
                   : "n/a")
           << "\n";
      }
      const auto freed = inv["freed_intercepts"].get<std::vector<std::string>>();
      if (!freed.empty()) {
        os << "freed intercepts:";
        for (const auto& f : freed) os << " " << f;
        os << "\n";
      }
      if (inv.contains("latent_means")) {
        const auto& lm = inv["latent_means"];
        os << "\nLatent means (reference " << lm["reference"].get<std::string>() << ")\n";
        os << pad("group", 12);
        const auto fs = lm["factors"].get<std::vector<std::string>>();
        for (const auto& f : fs) os << pad(f.substr(0, 14), 16);
        os << "\n";
        const auto gs = lm["groups"].get<std::vector<std::string>>();
        for (size_t gi = 0; gi < gs.size(); ++gi) {
          os << pad(gs[gi], 12);
          for (size_t fi = 0; fi < fs.size(); ++fi)
            os << pad(fmt(lm["kappa"][gi][fi].get<double>(), 3) + " (" +
                          fmt(lm["se_robust"][gi][fi].get<double>(), 3) + ")",
                      16);
          os << "\n";
        }
      }
    }
    out["invariance.txt"] = os.str();
  }

  return out;
}

int run_pipeline(const PipelineConfig& cfg) {
  try {
    if (cfg.out_dir.empty()) throw ConfigError("no output directory configured");
    const json master = build_master_document(cfg);
    std::string err;
    if (!validate_master(master, &err)) throw Error("master document failed validation: " + err);
    const auto rendered = render_report(master);

    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    {
      std::ofstream f(dir / "master.json");
      if (!f) throw Error("cannot write master.json");
      f << master.dump(2) << "\n";
    }
    for (const auto& [name, text] : rendered) {
      std::ofstream f(dir / name);
      if (!f) throw Error("cannot write " + name);
      f << text;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pipeline failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mcms

// Command-line front end: simulate data, run individual stages, or run the
// whole pipeline and render the report tables.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcms/descriptives.hpp"
#include "mcms/efa.hpp"
#include "mcms/errors.hpp"
#include "mcms/invariance.hpp"
#include "mcms/model_spec.hpp"
#include "mcms/report.hpp"
#include "mcms/simulate.hpp"

namespace {

using namespace mcms;

PipelineConfig load_config_with_overrides(const std::string& config_file,
                                          const std::string& out_dir,
                                          const std::string& decision_mode,
                                          const std::string& chisq_multiplier,
                                          const std::string& use_scaled) {
  PipelineConfig cfg = load_pipeline_config(config_file);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (!decision_mode.empty())
    cfg.decision_mode = decision_mode == "conjunctive" ? DecisionMode::Conjunctive
                                                       : DecisionMode::CfiOnly;
  if (!chisq_multiplier.empty())
    cfg.multiplier = chisq_multiplier == "n" ? ChisqMultiplier::N : ChisqMultiplier::NMinus1;
  if (!use_scaled.empty()) cfg.use_scaled = use_scaled == "true";
  return cfg;
}

int run_simulate(const std::string& config_file, bool builtin, long n, std::uint64_t seed,
                 bool seed_given, const std::string& out_file) {
  GeneratorConfig cfg = builtin ? builtin_mcms_generator() : load_generator(config_file);
  if (n > 0)
    for (auto& ng : cfg.n_per_group) ng = n;
  if (seed_given) cfg.seed = seed;

  const auto sim = simulate_responses(cfg);
  const auto records = all_records(sim, cfg.group_labels);
  std::vector<std::string> test_items;
  for (const auto& [name, v] : cfg.spam_rules.expected_test_answers) test_items.push_back(name);
  write_response_csv(out_file, records, cfg.scale, test_items);
  std::cout << "wrote " << records.size() << " responses (" << cfg.group_labels.size()
            << " groups, rng " << Rng::algorithm_id() << ") to " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survey psychometrics pipeline: ingest, reliability, EFA/CFA, invariance"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate synthetic response files");
  std::string sim_config, sim_out = "responses.csv";
  bool sim_builtin = false;
  long sim_n = 0;
  std::uint64_t sim_seed = 0;
  sim->add_option("--config", sim_config, "generator config (JSON)");
  sim->add_flag("--builtin", sim_builtin, "use the built-in generator parameters");
  sim->add_option("--n", sim_n, "override rows per group");
  auto* seed_opt = sim->add_option("--seed", sim_seed, "override the generator seed");
  sim->add_option("--out", sim_out, "output response CSV")->required();

  // emit default configs
  auto* init = app.add_subcommand("init-config", "write a default config file");
  std::string init_kind = "pipeline", init_out = "config.json";
  init->add_option("--kind", init_kind, "pipeline | generator | scale | model");
  init->add_option("--out", init_out, "output path")->required();

  // pipeline and stage subcommands share these options
  std::string config_file, out_dir, decision_mode, chisq_multiplier, use_scaled;
  auto add_common = [&](CLI::App* cmd, bool need_out) {
    cmd->add_option("--config", config_file, "pipeline config (JSON)")->required();
    auto* o = cmd->add_option("--out", out_dir, "output directory");
    if (need_out) o->required();
    cmd->add_option("--decision-mode", decision_mode, "cfi-only | conjunctive");
    cmd->add_option("--chisq-multiplier", chisq_multiplier, "n-1 | n");
    cmd->add_option("--use-scaled", use_scaled, "true | false");
  };
  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write the report");
  add_common(pipeline, true);
  auto* ingest_cmd = app.add_subcommand("ingest", "parse and spam-filter responses");
  add_common(ingest_cmd, true);
  auto* describe_cmd = app.add_subcommand("describe", "composite stats and reliability");
  add_common(describe_cmd, true);
  auto* efa_cmd = app.add_subcommand("efa", "exploratory factor analysis");
  add_common(efa_cmd, true);
  auto* cfa_cmd = app.add_subcommand("cfa", "confirmatory factor analysis");
  add_common(cfa_cmd, true);
  auto* invariance_cmd = app.add_subcommand("invariance", "multigroup invariance ladder");
  add_common(invariance_cmd, true);

  // report re-rendering
  auto* report_cmd = app.add_subcommand("report", "render tables from a master document");
  std::string master_file;
  report_cmd->add_option("--master", master_file, "master.json path")->required();
  report_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return run_simulate(sim_config, sim_builtin, sim_n, sim_seed, !seed_opt->empty(), sim_out);

    if (init->parsed()) {
      std::ofstream f(init_out);
      if (!f) throw ConfigError("cannot write " + init_out);
      if (init_kind == "generator") {
        f << generator_to_json(builtin_mcms_generator());
      } else if (init_kind == "scale") {
        f << scale_to_json(builtin_mcms());
      } else if (init_kind == "model") {
        f << model_spec_to_json(compile_model(builtin_mcms()));
      } else {
        PipelineConfig cfg;
        cfg.response_files = {"responses.csv"};
        cfg.out_dir = "report";
        f << pipeline_config_to_json(cfg);
      }
      std::cout << "wrote " << init_kind << " config to " << init_out << "\n";
      return 0;
    }

    if (report_cmd->parsed()) {
      std::ifstream in(master_file);
      if (!in) throw ConfigError("cannot open " + master_file);
      nlohmann::json master = nlohmann::json::parse(in);
      const auto rendered = render_report(master);
      std::filesystem::create_directories(out_dir);
      for (const auto& [name, text] : rendered) {
        std::ofstream f(std::filesystem::path(out_dir) / name);
        f << text;
      }
      std::cout << "rendered " << rendered.size() << " tables to " << out_dir << "\n";
      return 0;
    }

    // stage subcommands run the pipeline machinery and keep the relevant slice
    PipelineConfig cfg = load_config_with_overrides(config_file, out_dir, decision_mode,
                                                    chisq_multiplier, use_scaled);
    if (pipeline->parsed()) return run_pipeline(cfg);

    if (ingest_cmd->parsed()) cfg.run_efa = false;
    if (ingest_cmd->parsed() || describe_cmd->parsed() || efa_cmd->parsed() ||
        cfa_cmd->parsed())
      cfg.run_invariance = false;
    if (ingest_cmd->parsed() || describe_cmd->parsed() || cfa_cmd->parsed()) cfg.run_efa = false;

    const nlohmann::json master = build_master_document(cfg);
    const auto rendered = render_report(master);
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    auto write = [&](const std::string& name) {
      std::ofstream f(dir / name);
      f << rendered.at(name);
    };
    if (ingest_cmd->parsed()) write("ingest_summary.txt");
    if (describe_cmd->parsed()) write("descriptives.txt");
    if (efa_cmd->parsed()) {
      std::ofstream f(dir / "efa.json");
      f << master["efa"].dump(2) << "\n";
    }
    if (cfa_cmd->parsed()) {
      write("cfa_fit.txt");
      write("cfa_parameters.txt");
      write("factor_correlations.txt");
      std::ofstream f(dir / "cfa.json");
      f << master["cfa"].dump(2) << "\n";
    }
    if (invariance_cmd->parsed()) {
      write("invariance.txt");
      std::ofstream f(dir / "invariance.json");
      f << master["invariance"].dump(2) << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

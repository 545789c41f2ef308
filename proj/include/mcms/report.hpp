#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcms/ingest.hpp"
#include "mcms/invariance.hpp"
#include "mcms/scale.hpp"
#include "mcms/sem.hpp"

namespace mcms {

/// How response records are grouped for the analyses: by their own labels,
/// collapsed through a label map (e.g. countries into income bands), or
/// pooled into a single sample.
struct GroupSelection {
  enum class Mode { Labels, Map, Pooled };
  Mode mode = Mode::Labels;
  std::map<std::string, std::string> label_map;  // used by Mode::Map
  std::vector<std::string> exclude;              // dropped from pooled/mapped sets
  std::string pooled_label = "ALL";
};

/// Built-in country-to-income-band mapping used when Mode::Map has no map.
std::map<std::string, std::string> default_income_map();

struct PipelineConfig {
  std::string scale_file;  // empty: built-in instrument
  std::vector<std::string> response_files;
  SpamRules spam_rules = default_spam_rules();
  bool restricted_correlations = false;  // zero external-intrinsic covariances
  bool use_scaled = true;
  ChisqMultiplier multiplier = ChisqMultiplier::NMinus1;
  DecisionMode decision_mode = DecisionMode::CfiOnly;
  GroupSelection groups;
  bool run_efa = true;
  bool run_invariance = true;
  std::string out_dir;
};

std::string pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const std::string& text);
PipelineConfig load_pipeline_config(const std::filesystem::path& file);

/// Run every stage in memory and return the master document. Throws on any
/// stage failure, so no artifacts are produced for broken configs.
nlohmann::json build_master_document(const PipelineConfig& cfg);

/// Names of the rendered artifacts, in write order.
std::vector<std::string> report_artifact_names();

/// Pure rendering of the master document into fixed-layout text tables,
/// keyed by artifact name.
std::map<std::string, std::string> render_report(const nlohmann::json& master);

/// Structural check of a master document; fills `error` on failure.
bool validate_master(const nlohmann::json& master, std::string* error);

/// build + render + write master.json and all rendered tables under out_dir.
/// Returns the process exit status (0 ok, 2 config error, 1 other failure).
int run_pipeline(const PipelineConfig& cfg);

}  // namespace mcms

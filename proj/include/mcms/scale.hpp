#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcms {

/// One latent construct: its name, the codes of the items measuring it, and
/// the marker item whose loading is fixed to 1 for identification.
struct FactorDef {
  std::string name;
  std::vector<std::string> items;
  std::string marker;

  bool operator==(const FactorDef&) const = default;
};

/// A complete survey instrument: stem, response range and factor layout.
/// Item codes are the stable join key across response files, model specs and
/// reports; item wording is never needed by the analysis.
struct ScaleDefinition {
  std::string name;
  std::string stem;
  int response_min = 1;
  int response_max = 7;
  std::vector<FactorDef> factors;

  /// All item codes, factors in declared order, items in within-factor order.
  std::vector<std::string> flattened_items() const;
  int n_items() const;
  /// Factor containing `item`, or nullptr.
  const FactorDef* factor_of(const std::string& item) const;
  /// Index of `item` in flattened_items(), or -1.
  int item_index(const std::string& item) const;
  int factor_index(const std::string& factor_name) const;

  bool operator==(const ScaleDefinition&) const = default;
};

/// The built-in 18-item, 6-factor crowdworker motivation scale.
ScaleDefinition builtin_mcms();

/// Returns a human-readable description of every violated invariant
/// (empty means the definition is valid). Violations are data, not errors.
std::vector<std::string> validate_scale(const ScaleDefinition& def);

// Scale file format (JSON document, byte-stable round trip).
std::string scale_to_json(const ScaleDefinition& def);
ScaleDefinition scale_from_json(const std::string& text);
void save_scale(const ScaleDefinition& def, const std::filesystem::path& file);
ScaleDefinition load_scale(const std::filesystem::path& file);

/// Answer to the attention-check question.
enum class Attention { No, Yes, DontKnow, Missing };

std::string to_string(Attention a);
Attention attention_from_string(const std::string& s);

/// One respondent's raw answers plus quality-control fields. Survey data is
/// integer-valued; answers are stored as doubles so that synthetic
/// continuous-mode datasets flow through the same pipeline.
struct ResponseRecord {
  std::string respondent_id;
  std::string group;
  std::map<std::string, double> item_answers;
  std::map<std::string, double> test_item_answers;
  Attention attention = Attention::Missing;
};

/// Complete-case numeric response matrix for one group; column order follows
/// the scale definition's flattened item order.
struct ResponseMatrix {
  std::vector<std::string> items;
  Eigen::MatrixXd rows;  // n x p
  std::string group;

  long n() const { return rows.rows(); }
  int p() const { return static_cast<int>(rows.cols()); }
};

}  // namespace mcms

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mcms/ingest.hpp"
#include "mcms/linalg.hpp"
#include "mcms/scale.hpp"

namespace mcms {

/// Deterministic random stream: mt19937_64 with a fixed uniform->variate
/// mapping so that identical seeds reproduce identical draws on any platform.
/// Substreams for parallel units are derived by splitmix64 hashing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static std::uint64_t substream(std::uint64_t seed, std::uint64_t index);

  double uniform();                 // (0,1)
  double normal();                  // standard normal (Box-Muller)
  int uniform_int(int lo, int hi);  // inclusive
  double chisq(int df);             // sum of df squared normals

  static const char* algorithm_id() { return "mt19937_64/box-muller/splitmix64-substreams"; }

 private:
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

/// Parameter values for one group's measurement model.
struct GroupParams {
  Matrix lambda;      // p x q
  Matrix phi;         // q x q, symmetric positive definite
  Vector theta_diag;  // p residual variances
  Vector tau;         // p intercepts
  Vector kappa;       // q factor means
};

enum class DataMode { Continuous, Likert };

struct LatentDistribution {
  enum class Kind { Normal, ScaledT };
  Kind kind = Kind::Normal;
  int df = 5;  // for ScaledT; scaled to unit variance, requires df > 2
};

struct GeneratorConfig {
  ScaleDefinition scale;
  std::vector<std::string> group_labels;
  std::vector<GroupParams> groups;  // parallel to group_labels
  std::vector<long> n_per_group;
  DataMode mode = DataMode::Continuous;
  LatentDistribution latent;
  double spam_fraction = 0.0;
  std::uint64_t seed = 1;
  SpamRules spam_rules = default_spam_rules();

  const GroupParams& params_for(const std::string& label) const;
};

/// Single-group generator preloaded with the built-in instrument's published
/// loadings, intercepts and factor correlations, completed with unit factor
/// variances, residual variances 0.5 and zero factor means.
GeneratorConfig builtin_mcms_generator();

/// Published loading / intercept / factor-correlation values behind
/// builtin_mcms_generator(), exposed for recovery checks.
GroupParams builtin_mcms_parameters();

struct SimulatedGroup {
  ResponseMatrix matrix;                // all rows, spammers included
  std::vector<ResponseRecord> records;  // same order as matrix rows
  std::vector<bool> is_spammer;
};

/// Draw factor scores, apply the measurement model, inject spammers.
/// Deterministic in (seed, config); each group uses an independent substream.
std::map<std::string, SimulatedGroup> simulate_responses(const GeneratorConfig& cfg);

/// Additive edit to one parameter slot of one group's generator, addressed by
/// labels like "tau[Am3]", "lambda[Am2]", "kappa[Intrinsic]", "theta[Am1]",
/// "phi[Amotivation,Intrinsic Motivation]".
struct SlotEdit {
  std::string group;
  std::string slot;
  double delta = 0.0;
};

GeneratorConfig plant_noninvariance(GeneratorConfig cfg, const std::vector<SlotEdit>& edits);

// Generator config file format (JSON).
std::string generator_to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_from_json(const std::string& text);
void save_generator(const GeneratorConfig& cfg, const std::filesystem::path& file);
GeneratorConfig load_generator(const std::filesystem::path& file);

/// Flatten all groups' records (group order, row order) for CSV output.
std::vector<ResponseRecord> all_records(const std::map<std::string, SimulatedGroup>& sim,
                                        const std::vector<std::string>& group_order);

}  // namespace mcms

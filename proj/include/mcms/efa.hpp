#pragma once

#include <string>
#include <vector>

#include "mcms/ingest.hpp"
#include "mcms/linalg.hpp"
#include "mcms/scale.hpp"

namespace mcms {

enum class Extraction { PrincipalAxis };
enum class Rotation { None, Promax };

struct EfaSolution {
  std::vector<std::string> items;
  Matrix loadings;             // p x q pattern matrix
  Matrix factor_correlations;  // q x q, identity while unrotated
  Vector communalities;        // length p
  Extraction extraction = Extraction::PrincipalAxis;
  Rotation rotation = Rotation::None;
  int iterations = 0;
  bool heywood = false;  // a communality hit 1 and was clamped

  int p() const { return static_cast<int>(loadings.rows()); }
  int q() const { return static_cast<int>(loadings.cols()); }
};

/// Principal-axis factoring on the correlation matrix derived from `moments`.
/// Initial communalities are squared multiple correlations; the reduced
/// correlation matrix is re-eigendecomposed until communalities move less
/// than 1e-6 (at most 200 sweeps).
EfaSolution extract_factors(const SampleMoments& moments, int q);

/// Normalized varimax followed by promax: the varimax pattern is raised
/// elementwise to |a|^kappa * sign(a) and fitted by oblique least squares;
/// factor correlations come from the transformation matrix.
EfaSolution rotate_promax(const EfaSolution& unrotated, double kappa = 4.0);

/// Varimax alone (Kaiser-normalized), exposed for diagnostics and tests.
EfaSolution rotate_varimax(const EfaSolution& unrotated);

/// Item-retention thresholds for one reduction round. `min_loading` applies
/// while the item's factor still has more than 3 items; below that the floor
/// of 0.5 takes over.
struct ReductionPolicy {
  double min_loading = 0.5;
  double max_crossloading = 0.35;
  bool enforce_theorized_factor = true;
  std::vector<std::pair<std::string, std::string>> similar_item_pairs;

  static ReductionPolicy round1() { return {0.5, 0.35, true, {}}; }
  static ReductionPolicy round2() { return {0.7, 0.30, true, {}}; }
};

struct RemovalEntry {
  int iteration = 0;
  std::string item;
  std::string reason;  // "wrong factor" | "cross-loading" | "low loading" | "similar item"
  double primary_loading = 0.0;
  double max_crossloading = 0.0;
};

struct ReductionResult {
  std::vector<std::string> kept;
  std::vector<RemovalEntry> log;
};

/// Iteratively re-run EFA + promax and drop the single worst offending item
/// until every kept item satisfies the policy. Deterministic: within the
/// highest-priority violation class the item with the lowest primary loading
/// goes first, ties broken by item code.
ReductionResult reduce_item_pool(const ResponseMatrix& m, const ScaleDefinition& def,
                                 const ReductionPolicy& policy);

/// Machine-readable removal log: one line per removal.
std::string removal_log_text(const std::vector<RemovalEntry>& log);

}  // namespace mcms

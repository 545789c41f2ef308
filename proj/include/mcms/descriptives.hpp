#pragma once

#include <string>
#include <vector>

#include "mcms/linalg.hpp"
#include "mcms/scale.hpp"

namespace mcms {

/// Per-factor composite (unweighted item-mean) means and SDs across
/// respondents, divisor n-1.
struct CompositeStats {
  std::vector<std::string> factors;
  Vector mean;
  Vector sd;
};

CompositeStats composite_stats(const ResponseMatrix& m, const ScaleDefinition& def);

/// Pearson correlations between factor composites with two-sided p-values
/// (t distribution, n-2 df). Zero-variance composites yield NaN entries,
/// listed in `undefined`.
struct CompositeCorrelations {
  std::vector<std::string> factors;
  Matrix corr;
  Matrix p_values;
  long n = 0;
  std::vector<std::pair<std::string, std::string>> undefined;
};

CompositeCorrelations composite_correlations(const ResponseMatrix& m,
                                             const ScaleDefinition& def);

struct AlphaEstimate {
  double alpha = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int k = 0;
  long n = 0;
};

/// Cronbach's alpha for one factor's items with the 95% Feldt F interval.
AlphaEstimate cronbach_alpha(const ResponseMatrix& m, const ScaleDefinition& def,
                             const std::string& factor_name);

/// Alpha from an item covariance matrix alone (no interval).
double cronbach_alpha_from_cov(const Matrix& item_cov);

}  // namespace mcms

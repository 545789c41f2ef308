#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mcms/linalg.hpp"
#include "mcms/scale.hpp"

namespace mcms {

/// Quality-control rules: the exact answers the embedded test items require
/// plus the mandatory attention answer. A uniform-random responder passes all
/// of them with probability (1/range)^k * 1/n_attention_options.
struct SpamRules {
  std::map<std::string, int> expected_test_answers;
  Attention attention_required = Attention::Yes;
  int n_attention_options = 3;

  int n_test_items() const { return static_cast<int>(expected_test_answers.size()); }
  /// Pass probability of a responder answering uniformly at random.
  double random_pass_probability(const ScaleDefinition& def) const;
};

/// Default rules matching the built-in instrument's three test items.
SpamRules default_spam_rules();

struct GroupCounts {
  long n_raw = 0;
  long n_clean = 0;
};

struct IngestSummary {
  long n_raw = 0;
  long n_clean = 0;
  double spam_rate = 0.0;  // 1 - n_clean/n_raw
  std::map<std::string, GroupCounts> per_group;
};

struct RejectedRow {
  std::string respondent_id;
  std::string reason;
  long line = 0;  // 1-based line number in the source file, 0 if n/a
};

struct ParseResult {
  std::vector<ResponseRecord> records;
  std::vector<RejectedRow> rejected;  // malformed/incomplete rows, with reasons
};

/// Parse a response CSV. Rows with unparseable or out-of-range answers, or
/// with missing cells, are excluded and logged; structural problems (missing
/// required columns) throw.
ParseResult parse_responses(const std::filesystem::path& file, const ScaleDefinition& def);
ParseResult parse_responses_text(const std::string& csv, const ScaleDefinition& def);

/// One line per rejected record: "<respondent_id>\t<reason>".
std::string rejection_log(const std::vector<RejectedRow>& rejected);

struct FilterOutcome {
  std::vector<ResponseRecord> clean;
  std::vector<ResponseRecord> rejected;
  IngestSummary summary;
};

/// A record is clean iff every test item matches its expected answer and the
/// attention answer equals the required one.
FilterOutcome apply_spam_filter(const std::vector<ResponseRecord>& records,
                                const SpamRules& rules);

/// Partition clean records into per-group matrices, columns in scale order.
std::map<std::string, ResponseMatrix> split_groups(const std::vector<ResponseRecord>& records,
                                                   const ScaleDefinition& def);

/// Pool several records into a single matrix under one label.
ResponseMatrix pool_records(const std::vector<ResponseRecord>& records,
                            const ScaleDefinition& def, const std::string& label);

/// Sufficient statistics for covariance-structure estimation. `gamma` holds
/// the asymptotic covariance matrix of vech(S) (centered fourth-order
/// moments); `gamma_cross` the third-order cross block between vech(S) and
/// the sample mean, used when a model constrains the mean structure.
struct SampleMoments {
  std::vector<std::string> items;
  long n = 0;
  Vector mean;
  Matrix cov;     // divisor n-1
  Matrix cov_ml;  // divisor n
  Matrix gamma;        // p* x p*, empty when not computed
  Matrix gamma_cross;  // p* x p, empty when not computed
  std::vector<std::string> warnings;

  int p() const { return static_cast<int>(mean.size()); }
  bool has_gamma() const { return gamma.size() > 0; }
};

/// Mean, covariances and (optionally) the fourth-moment matrix of a group.
SampleMoments compute_sample_moments(const ResponseMatrix& m, bool with_fourth_moments = true);

/// Moments assembled from explicit values (synthetic / population input).
SampleMoments moments_from_values(std::vector<std::string> items, long n, Vector mean,
                                  Matrix cov);

/// Normal-theory value of gamma at covariance `sigma`: 2 D+ (sigma x sigma) D+'.
Matrix normal_theory_gamma(const Matrix& sigma);

// Response file I/O (CSV with header: respondent_id,group,<items>,<tests>,attention).
void write_response_csv(const std::filesystem::path& file,
                        const std::vector<ResponseRecord>& records,
                        const ScaleDefinition& def,
                        const std::vector<std::string>& test_items);
std::string response_csv_text(const std::vector<ResponseRecord>& records,
                              const ScaleDefinition& def,
                              const std::vector<std::string>& test_items);

}  // namespace mcms

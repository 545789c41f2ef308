#include "mcms/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcms/errors.hpp"

namespace mcms {

double SpamRules::random_pass_probability(const ScaleDefinition& def) const {
  const int levels = def.response_max - def.response_min + 1;
  double p = 1.0;
  for (int i = 0; i < n_test_items(); ++i) p /= levels;
  return p / n_attention_options;
}

SpamRules default_spam_rules() {
  SpamRules rules;
  rules.expected_test_answers = {{"Test1", 5}, {"Test2", 2}, {"Test3", 6}};
  rules.attention_required = Attention::Yes;
  rules.n_attention_options = 3;
  return rules;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::string format_answer(double v) {
  if (v == std::round(v) && std::abs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ParseResult parse_responses_text(const std::string& csv, const ScaleDefinition& def) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("response file is empty (no header row)");

  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> items = def.flattened_items();

  int id_col = -1, group_col = -1, attention_col = -1;
  std::map<std::string, int> item_cols;       // item code -> column
  std::map<std::string, int> test_item_cols;  // anything not otherwise claimed
  for (size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "respondent_id") id_col = static_cast<int>(c);
    else if (h == "group") group_col = static_cast<int>(c);
    else if (h == "attention") attention_col = static_cast<int>(c);
    else if (def.item_index(h) >= 0) item_cols[h] = static_cast<int>(c);
    else test_item_cols[h] = static_cast<int>(c);
  }
  if (id_col < 0) throw ParseError("header mismatch: missing column respondent_id");
  if (group_col < 0) throw ParseError("header mismatch: missing column group");
  if (attention_col < 0) throw ParseError("header mismatch: missing column attention");
  for (const auto& it : items)
    if (!item_cols.count(it)) throw ParseError("header mismatch: missing item column " + it);

  ParseResult result;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    ResponseRecord rec;
    rec.respondent_id = static_cast<size_t>(id_col) < cells.size() ? cells[id_col] : "";
    rec.group = static_cast<size_t>(group_col) < cells.size() ? cells[group_col] : "";

    std::string reason;
    auto cell = [&](int c) -> std::string {
      return static_cast<size_t>(c) < cells.size() ? cells[c] : std::string();
    };

    for (const auto& it : items) {
      const std::string raw = cell(item_cols[it]);
      double v;
      if (raw.empty()) {
        reason = "missing answer for " + it;
        break;
      }
      if (!parse_number(raw, v)) {
        reason = "unparseable answer for " + it;
        break;
      }
      if (v < def.response_min || v > def.response_max) {
        reason = "answer out of range for " + it;
        break;
      }
      rec.item_answers[it] = v;
    }
    if (reason.empty()) {
      for (const auto& [name, c] : test_item_cols) {
        const std::string raw = cell(c);
        double v;
        if (raw.empty()) {
          reason = "missing test answer for " + name;
          break;
        }
        if (!parse_number(raw, v)) {
          reason = "unparseable test answer for " + name;
          break;
        }
        if (v < def.response_min || v > def.response_max) {
          reason = "test answer out of range for " + name;
          break;
        }
        rec.test_item_answers[name] = v;
      }
    }
    if (!reason.empty()) {
      result.rejected.push_back({rec.respondent_id, reason, line_no});
      continue;
    }
    rec.attention = attention_from_string(cell(attention_col));
    result.records.push_back(std::move(rec));
  }
  return result;
}

ParseResult parse_responses(const std::filesystem::path& file, const ScaleDefinition& def) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open response file: " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_responses_text(buf.str(), def);
}

std::string rejection_log(const std::vector<RejectedRow>& rejected) {
  std::string out;
  for (const auto& r : rejected) out += r.respondent_id + "\t" + r.reason + "\n";
  return out;
}

FilterOutcome apply_spam_filter(const std::vector<ResponseRecord>& records,
                                const SpamRules& rules) {
  FilterOutcome out;
  for (const auto& rec : records) {
    for (const auto& [name, expected] : rules.expected_test_answers)
      if (!rec.test_item_answers.count(name))
        throw ConfigError("spam rules reference test item " + name +
                          " absent from record " + rec.respondent_id);
    bool ok = rec.attention == rules.attention_required;
    for (const auto& [name, expected] : rules.expected_test_answers)
      ok = ok && rec.test_item_answers.at(name) == static_cast<double>(expected);

    auto& counts = out.summary.per_group[rec.group];
    ++counts.n_raw;
    ++out.summary.n_raw;
    if (ok) {
      ++counts.n_clean;
      ++out.summary.n_clean;
      out.clean.push_back(rec);
    } else {
      out.rejected.push_back(rec);
    }
  }
  out.summary.spam_rate =
      out.summary.n_raw == 0
          ? 0.0
          : 1.0 - static_cast<double>(out.summary.n_clean) / out.summary.n_raw;
  return out;
}

namespace {

ResponseMatrix records_to_matrix(const std::vector<const ResponseRecord*>& records,
                                 const ScaleDefinition& def, const std::string& label) {
  const std::vector<std::string> items = def.flattened_items();
  ResponseMatrix m;
  m.items = items;
  m.group = label;
  m.rows.resize(static_cast<long>(records.size()), static_cast<long>(items.size()));
  for (size_t r = 0; r < records.size(); ++r)
    for (size_t c = 0; c < items.size(); ++c) {
      auto it = records[r]->item_answers.find(items[c]);
      if (it == records[r]->item_answers.end())
        throw ConfigError("record " + records[r]->respondent_id + " is missing item " +
                          items[c]);
      m.rows(static_cast<long>(r), static_cast<long>(c)) = it->second;
    }
  return m;
}

}  // namespace

std::map<std::string, ResponseMatrix> split_groups(const std::vector<ResponseRecord>& records,
                                                   const ScaleDefinition& def) {
  std::map<std::string, std::vector<const ResponseRecord*>> by_group;
  for (const auto& rec : records) by_group[rec.group].push_back(&rec);
  std::map<std::string, ResponseMatrix> out;
  for (const auto& [label, rows] : by_group)
    out.emplace(label, records_to_matrix(rows, def, label));
  return out;
}

ResponseMatrix pool_records(const std::vector<ResponseRecord>& records,
                            const ScaleDefinition& def, const std::string& label) {
  std::vector<const ResponseRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) ptrs.push_back(&r);
  return records_to_matrix(ptrs, def, label);
}

SampleMoments compute_sample_moments(const ResponseMatrix& m, bool with_fourth_moments) {
  const long n = m.n();
  const int p = m.p();
  if (n < 2) throw FitError("sample moments require at least 2 rows, got " + std::to_string(n));

  SampleMoments sm;
  sm.items = m.items;
  sm.n = n;
  if (n < p + 1)
    sm.warnings.push_back("n=" + std::to_string(n) + " below p+1=" + std::to_string(p + 1) +
                          "; covariance matrix will be singular");

  sm.mean = m.rows.colwise().mean();
  Matrix centered = m.rows.rowwise() - sm.mean.transpose();
  sm.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  sm.cov_ml = sm.cov * (static_cast<double>(n - 1) / static_cast<double>(n));

  if (with_fourth_moments) {
    const int ps = vech_size(p);
    Matrix gamma = Matrix::Zero(ps, ps);
    Matrix cross = Matrix::Zero(ps, p);
    Vector b(ps);
    for (long r = 0; r < n; ++r) {
      const auto z = centered.row(r);
      int k = 0;
      for (int j = 0; j < p; ++j)
        for (int i = j; i < p; ++i) b[k++] = z[i] * z[j];
      gamma.selfadjointView<Eigen::Lower>().rankUpdate(b, 1.0);
      cross.noalias() += b * z;
    }
    gamma = gamma.selfadjointView<Eigen::Lower>();
    gamma /= static_cast<double>(n);
    cross /= static_cast<double>(n);
    const Vector sbar = vech(sm.cov_ml);
    gamma.noalias() -= sbar * sbar.transpose();
    sm.gamma = std::move(gamma);
    sm.gamma_cross = std::move(cross);
  }
  return sm;
}

SampleMoments moments_from_values(std::vector<std::string> items, long n, Vector mean,
                                  Matrix cov) {
  SampleMoments sm;
  sm.items = std::move(items);
  sm.n = n;
  sm.mean = std::move(mean);
  sm.cov = std::move(cov);
  sm.cov_ml = sm.cov * (static_cast<double>(n - 1) / static_cast<double>(n));
  return sm;
}

Matrix normal_theory_gamma(const Matrix& sigma) {
  const int p = static_cast<int>(sigma.rows());
  const int ps = vech_size(p);
  Matrix g(ps, ps);
  for (int a = 0; a < ps; ++a) {
    const auto [i, j] = vech_indices(p, a);
    for (int b = 0; b <= a; ++b) {
      const auto [k, l] = vech_indices(p, b);
      const double v = sigma(i, k) * sigma(j, l) + sigma(i, l) * sigma(j, k);
      g(a, b) = v;
      g(b, a) = v;
    }
  }
  return g;
}

std::string response_csv_text(const std::vector<ResponseRecord>& records,
                              const ScaleDefinition& def,
                              const std::vector<std::string>& test_items) {
  const std::vector<std::string> items = def.flattened_items();
  std::string out = "respondent_id,group";
  for (const auto& it : items) out += "," + it;
  for (const auto& t : test_items) out += "," + t;
  out += ",attention\n";
  for (const auto& rec : records) {
    out += rec.respondent_id + "," + rec.group;
    for (const auto& it : items) {
      auto found = rec.item_answers.find(it);
      out += ",";
      if (found != rec.item_answers.end()) out += format_answer(found->second);
    }
    for (const auto& t : test_items) {
      auto found = rec.test_item_answers.find(t);
      out += ",";
      if (found != rec.test_item_answers.end()) out += format_answer(found->second);
    }
    out += "," + to_string(rec.attention) + "\n";
  }
  return out;
}

void write_response_csv(const std::filesystem::path& file,
                        const std::vector<ResponseRecord>& records,
                        const ScaleDefinition& def,
                        const std::vector<std::string>& test_items) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot open response file for writing: " + file.string());
  out << response_csv_text(records, def, test_items);
}

}  // namespace mcms

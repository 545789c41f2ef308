#include "mcms/simulate.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mcms/errors.hpp"

namespace mcms {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::substream(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index + 1));
}

double Rng::uniform() {
  // 53-bit mantissa, strictly inside (0,1)
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  have_cached_ = true;
  return r * std::cos(a);
}

int Rng::uniform_int(int lo, int hi) {
  const int span = hi - lo + 1;
  int v = lo + static_cast<int>(uniform() * span);
  return std::min(v, hi);
}

double Rng::chisq(int df) {
  double s = 0.0;
  for (int i = 0; i < df; ++i) {
    const double z = normal();
    s += z * z;
  }
  return s;
}

const GroupParams& GeneratorConfig::params_for(const std::string& label) const {
  for (size_t i = 0; i < group_labels.size(); ++i)
    if (group_labels[i] == label) return groups[i];
  throw ConfigError("generator has no group " + label);
}

GroupParams builtin_mcms_parameters() {
  const ScaleDefinition def = builtin_mcms();
  const int p = def.n_items();
  const int q = static_cast<int>(def.factors.size());

  GroupParams gp;
  gp.lambda = Matrix::Zero(p, q);
  const double loadings[6][3] = {
      {1.0, 0.882, 0.955},  // Amotivation
      {1.0, 0.708, 0.946},  // Material External Regulation
      {1.0, 0.844, 0.937},  // Social External Regulation
      {1.0, 1.001, 1.08},   // Introjected Regulation
      {1.0, 1.098, 1.014},  // Identified Regulation
      {1.0, 0.88, 0.995},   // Intrinsic Motivation
  };
  const double intercepts[6][3] = {
      {1.824, 1.683, 2.012}, {5.987, 6.101, 6.059}, {2.285, 2.041, 3.086},
      {2.251, 2.309, 2.186}, {4.274, 3.967, 4.56},  {5.623, 5.758, 5.637},
  };
  gp.tau = Vector::Zero(p);
  for (int f = 0; f < q; ++f)
    for (int i = 0; i < 3; ++i) {
      gp.lambda(3 * f + i, f) = loadings[f][i];
      gp.tau[3 * f + i] = intercepts[f][i];
    }

  gp.phi = Matrix::Identity(q, q);
  const double corr[6][6] = {
      {1.0, 0, 0, 0, 0, 0},
      {-0.263, 1.0, 0, 0, 0, 0},
      {0.051, 0.128, 1.0, 0, 0, 0},
      {0.151, 0.108, 0.600, 1.0, 0, 0},
      {-0.222, 0.440, 0.458, 0.449, 1.0, 0},
      {-0.523, 0.362, 0.283, 0.230, 0.525, 1.0},
  };
  for (int i = 0; i < q; ++i)
    for (int j = 0; j <= i; ++j) {
      gp.phi(i, j) = corr[i][j];
      gp.phi(j, i) = corr[i][j];
    }

  gp.theta_diag = Vector::Constant(p, 0.5);
  gp.kappa = Vector::Zero(q);
  return gp;
}

GeneratorConfig builtin_mcms_generator() {
  GeneratorConfig cfg;
  cfg.scale = builtin_mcms();
  cfg.group_labels = {"SIM"};
  cfg.groups = {builtin_mcms_parameters()};
  cfg.n_per_group = {1000};
  return cfg;
}

namespace {

void validate_generator(const GeneratorConfig& cfg) {
  if (cfg.group_labels.size() != cfg.groups.size() ||
      cfg.group_labels.size() != cfg.n_per_group.size() || cfg.group_labels.empty())
    throw ConfigError("generator group lists are inconsistent or empty");
  if (cfg.spam_fraction < 0.0 || cfg.spam_fraction >= 1.0)
    throw ConfigError("spam_fraction must lie in [0,1)");
  if (cfg.latent.kind == LatentDistribution::Kind::ScaledT && cfg.latent.df <= 2)
    throw ConfigError("scaled-t latent distribution requires df > 2");
  const int p = cfg.scale.n_items();
  const int q = static_cast<int>(cfg.scale.factors.size());
  for (const auto& gp : cfg.groups) {
    if (gp.lambda.rows() != p || gp.lambda.cols() != q || gp.phi.rows() != q ||
        gp.theta_diag.size() != p || gp.tau.size() != p || gp.kappa.size() != q)
      throw ConfigError("generator parameter dimensions do not match the scale");
    if ((gp.theta_diag.array() <= 0.0).any())
      throw ConfigError("residual variances must be positive");
  }
}

}  // namespace

std::map<std::string, SimulatedGroup> simulate_responses(const GeneratorConfig& cfg) {
  validate_generator(cfg);
  const int p = cfg.scale.n_items();
  const int q = static_cast<int>(cfg.scale.factors.size());
  const std::vector<std::string> items = cfg.scale.flattened_items();
  std::vector<std::string> test_items;
  for (const auto& [name, v] : cfg.spam_rules.expected_test_answers) test_items.push_back(name);

  std::map<std::string, SimulatedGroup> out;
  for (size_t g = 0; g < cfg.group_labels.size(); ++g) {
    const std::string& label = cfg.group_labels[g];
    const GroupParams& gp = cfg.groups[g];
    const long n = cfg.n_per_group[g];

    Eigen::LLT<Matrix> llt(gp.phi);
    if (llt.info() != Eigen::Success)
      throw ConfigError("factor covariance matrix for group " + label +
                        " is not positive definite");
    const Matrix phi_chol = llt.matrixL();
    const Vector resid_sd = gp.theta_diag.array().sqrt();

    Rng rng(Rng::substream(cfg.seed, g));
    SimulatedGroup sim;
    sim.matrix.items = items;
    sim.matrix.group = label;
    sim.matrix.rows.resize(n, p);
    sim.records.reserve(n);
    sim.is_spammer.resize(n);

    Vector z(q), eta(q), y(p);
    for (long r = 0; r < n; ++r) {
      ResponseRecord rec;
      rec.respondent_id = label + "-" + std::to_string(r + 1);
      rec.group = label;

      const bool spam = cfg.spam_fraction > 0.0 && rng.uniform() < cfg.spam_fraction;
      sim.is_spammer[r] = spam;
      if (spam) {
        for (int i = 0; i < p; ++i)
          y[i] = rng.uniform_int(cfg.scale.response_min, cfg.scale.response_max);
        for (const auto& t : test_items)
          rec.test_item_answers[t] =
              rng.uniform_int(cfg.scale.response_min, cfg.scale.response_max);
        switch (rng.uniform_int(0, 2)) {
          case 0: rec.attention = Attention::No; break;
          case 1: rec.attention = Attention::Yes; break;
          default: rec.attention = Attention::DontKnow; break;
        }
      } else {
        // ScaledT draws one heavy-tailed mixing weight per respondent and
        // applies it to factors and residuals alike (an elliptical respondent
        // effect). A weight on the factors alone would be absorbed by the
        // free factor covariances and leave the scaled statistic untouched.
        double tail_scale = 1.0;
        if (cfg.latent.kind == LatentDistribution::Kind::ScaledT) {
          const double w = rng.chisq(cfg.latent.df) / cfg.latent.df;
          tail_scale = std::sqrt((cfg.latent.df - 2.0) / cfg.latent.df) / std::sqrt(w);
        }
        for (int i = 0; i < q; ++i) z[i] = rng.normal() * tail_scale;
        eta = gp.kappa + phi_chol * z;
        y = gp.tau + gp.lambda * eta;
        for (int i = 0; i < p; ++i) y[i] += resid_sd[i] * tail_scale * rng.normal();
        if (cfg.mode == DataMode::Likert) {
          for (int i = 0; i < p; ++i) {
            double v = std::min(std::max(y[i], static_cast<double>(cfg.scale.response_min)),
                                static_cast<double>(cfg.scale.response_max));
            y[i] = std::round(v);
          }
        }
        for (const auto& [t, expected] : cfg.spam_rules.expected_test_answers)
          rec.test_item_answers[t] = expected;
        rec.attention = cfg.spam_rules.attention_required;
      }
      sim.matrix.rows.row(r) = y.transpose();
      for (int i = 0; i < p; ++i) rec.item_answers[items[i]] = y[i];
      sim.records.push_back(std::move(rec));
    }
    out.emplace(label, std::move(sim));
  }
  return out;
}

namespace {

// "tau[Am3]" -> matrix name + bracket args
void parse_slot(const std::string& slot, std::string& mat, std::vector<std::string>& args) {
  const auto open = slot.find('[');
  const auto close = slot.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ConfigError("malformed parameter slot: " + slot);
  mat = slot.substr(0, open);
  std::string inner = slot.substr(open + 1, close - open - 1);
  std::string cur;
  args.clear();
  for (char c : inner) {
    if (c == ',') {
      args.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  args.push_back(cur);
}

}  // namespace

GeneratorConfig plant_noninvariance(GeneratorConfig cfg, const std::vector<SlotEdit>& edits) {
  for (const auto& e : edits) {
    int gi = -1;
    for (size_t i = 0; i < cfg.group_labels.size(); ++i)
      if (cfg.group_labels[i] == e.group) gi = static_cast<int>(i);
    if (gi < 0) throw ConfigError("edit references unknown group " + e.group);
    GroupParams& gp = cfg.groups[gi];

    std::string mat;
    std::vector<std::string> args;
    parse_slot(e.slot, mat, args);
    auto item_idx = [&](const std::string& code) {
      const int idx = cfg.scale.item_index(code);
      if (idx < 0) throw ConfigError("edit references unknown item " + code);
      return idx;
    };
    auto factor_idx = [&](const std::string& name) {
      const int idx = cfg.scale.factor_index(name);
      if (idx < 0) throw ConfigError("edit references unknown factor " + name);
      return idx;
    };

    if (mat == "tau" && args.size() == 1) {
      gp.tau[item_idx(args[0])] += e.delta;
    } else if (mat == "theta" && args.size() == 1) {
      gp.theta_diag[item_idx(args[0])] += e.delta;
    } else if (mat == "kappa" && args.size() == 1) {
      gp.kappa[factor_idx(args[0])] += e.delta;
    } else if (mat == "lambda" && args.size() >= 1) {
      const int i = item_idx(args[0]);
      int f;
      if (args.size() == 2) {
        f = factor_idx(args[1]);
      } else {
        const FactorDef* owner = cfg.scale.factor_of(args[0]);
        f = cfg.scale.factor_index(owner->name);
      }
      gp.lambda(i, f) += e.delta;
    } else if (mat == "phi" && args.size() == 2) {
      const int a = factor_idx(args[0]);
      const int b = factor_idx(args[1]);
      gp.phi(a, b) += e.delta;
      if (a != b) gp.phi(b, a) += e.delta;
    } else {
      throw ConfigError("unsupported parameter slot: " + e.slot);
    }
  }
  return cfg;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const int r = static_cast<int>(j.size());
  const int c = r == 0 ? 0 : static_cast<int>(j.at(0).size());
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const nlohmann::json& j) {
  Vector v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

}  // namespace

std::string generator_to_json(const GeneratorConfig& cfg) {
  nlohmann::json j;
  j["scale"] = nlohmann::json::parse(scale_to_json(cfg.scale));
  j["mode"] = cfg.mode == DataMode::Likert ? "likert" : "continuous";
  j["latent"] = {{"kind", cfg.latent.kind == LatentDistribution::Kind::ScaledT ? "scaled_t"
                                                                               : "normal"},
                 {"df", cfg.latent.df}};
  j["spam_fraction"] = cfg.spam_fraction;
  j["seed"] = cfg.seed;
  j["rng"] = Rng::algorithm_id();
  nlohmann::json rules;
  rules["expected_test_answers"] = cfg.spam_rules.expected_test_answers;
  rules["attention_required"] = to_string(cfg.spam_rules.attention_required);
  rules["n_attention_options"] = cfg.spam_rules.n_attention_options;
  j["spam_rules"] = rules;
  j["groups"] = nlohmann::json::array();
  for (size_t g = 0; g < cfg.group_labels.size(); ++g) {
    nlohmann::json jg;
    jg["label"] = cfg.group_labels[g];
    jg["n"] = cfg.n_per_group[g];
    jg["lambda"] = matrix_to_json(cfg.groups[g].lambda);
    jg["phi"] = matrix_to_json(cfg.groups[g].phi);
    jg["theta"] = vector_to_json(cfg.groups[g].theta_diag);
    jg["tau"] = vector_to_json(cfg.groups[g].tau);
    jg["kappa"] = vector_to_json(cfg.groups[g].kappa);
    j["groups"].push_back(jg);
  }
  return j.dump(2) + "\n";
}

GeneratorConfig generator_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("generator config is not valid JSON: ") + e.what());
  }
  GeneratorConfig cfg;
  try {
    cfg.scale = scale_from_json(j.at("scale").dump());
    cfg.mode = j.value("mode", "continuous") == "likert" ? DataMode::Likert
                                                         : DataMode::Continuous;
    if (j.contains("latent")) {
      cfg.latent.kind = j["latent"].value("kind", "normal") == "scaled_t"
                            ? LatentDistribution::Kind::ScaledT
                            : LatentDistribution::Kind::Normal;
      cfg.latent.df = j["latent"].value("df", 5);
    }
    cfg.spam_fraction = j.value("spam_fraction", 0.0);
    cfg.seed = j.value("seed", 1ULL);
    if (j.contains("spam_rules")) {
      const auto& r = j["spam_rules"];
      cfg.spam_rules.expected_test_answers.clear();
      for (const auto& [k, v] : r.at("expected_test_answers").items())
        cfg.spam_rules.expected_test_answers[k] = v.get<int>();
      cfg.spam_rules.attention_required =
          attention_from_string(r.value("attention_required", "Yes"));
      cfg.spam_rules.n_attention_options = r.value("n_attention_options", 3);
    }
    for (const auto& jg : j.at("groups")) {
      cfg.group_labels.push_back(jg.at("label").get<std::string>());
      cfg.n_per_group.push_back(jg.at("n").get<long>());
      GroupParams gp;
      gp.lambda = matrix_from_json(jg.at("lambda"));
      gp.phi = matrix_from_json(jg.at("phi"));
      gp.theta_diag = vector_from_json(jg.at("theta"));
      gp.tau = vector_from_json(jg.at("tau"));
      gp.kappa = vector_from_json(jg.at("kappa"));
      cfg.groups.push_back(std::move(gp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("generator config is missing required fields: ") + e.what());
  }
  validate_generator(cfg);
  return cfg;
}

void save_generator(const GeneratorConfig& cfg, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot open generator config for writing: " + file.string());
  out << generator_to_json(cfg);
}

GeneratorConfig load_generator(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open generator config: " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return generator_from_json(buf.str());
}

std::vector<ResponseRecord> all_records(const std::map<std::string, SimulatedGroup>& sim,
                                        const std::vector<std::string>& group_order) {
  std::vector<ResponseRecord> out;
  for (const auto& label : group_order) {
    auto it = sim.find(label);
    if (it == sim.end()) continue;
    out.insert(out.end(), it->second.records.begin(), it->second.records.end());
  }
  return out;
}

}  // namespace mcms

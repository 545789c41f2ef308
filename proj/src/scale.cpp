#include "mcms/scale.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mcms/errors.hpp"

namespace mcms {

std::vector<std::string> ScaleDefinition::flattened_items() const {
  std::vector<std::string> out;
  for (const auto& f : factors) out.insert(out.end(), f.items.begin(), f.items.end());
  return out;
}

int ScaleDefinition::n_items() const {
  int n = 0;
  for (const auto& f : factors) n += static_cast<int>(f.items.size());
  return n;
}

const FactorDef* ScaleDefinition::factor_of(const std::string& item) const {
  for (const auto& f : factors)
    for (const auto& it : f.items)
      if (it == item) return &f;
  return nullptr;
}

int ScaleDefinition::item_index(const std::string& item) const {
  int idx = 0;
  for (const auto& f : factors)
    for (const auto& it : f.items) {
      if (it == item) return idx;
      ++idx;
    }
  return -1;
}

int ScaleDefinition::factor_index(const std::string& factor_name) const {
  for (size_t i = 0; i < factors.size(); ++i)
    if (factors[i].name == factor_name) return static_cast<int>(i);
  return -1;
}

ScaleDefinition builtin_mcms() {
  ScaleDefinition def;
  def.name = "MCMS";
  def.stem = "Why do you or would you put efforts into doing CrowdFlower tasks?";
  def.response_min = 1;
  def.response_max = 7;
  def.factors = {
      {"Amotivation", {"Am1", "Am2", "Am3"}, "Am1"},
      {"Material External Regulation", {"ExMat1", "ExMat2", "ExMat3"}, "ExMat1"},
      {"Social External Regulation", {"ExSoc1", "ExSoc2", "ExSoc3"}, "ExSoc1"},
      {"Introjected Regulation", {"Introj1", "Introj2", "Introj3"}, "Introj1"},
      {"Identified Regulation", {"Ident1", "Ident2", "Ident3"}, "Ident1"},
      {"Intrinsic Motivation", {"Intrin1", "Intrin2", "Intrin3"}, "Intrin1"},
  };
  return def;
}

std::vector<std::string> validate_scale(const ScaleDefinition& def) {
  std::vector<std::string> v;
  if (def.response_min >= def.response_max)
    v.push_back("response_min must be less than response_max");
  if (def.factors.empty()) v.push_back("scale has no factors");

  std::map<std::string, int> item_counts;
  for (const auto& f : def.factors) {
    if (f.items.size() < 2)
      v.push_back("factor " + f.name + " has " +
                  (f.items.empty() ? std::string("no items") : std::string("fewer than 2 items")));
    std::set<std::string> within;
    for (const auto& it : f.items) {
      ++item_counts[it];
      if (!within.insert(it).second)
        v.push_back("item " + it + " duplicated within factor " + f.name);
    }
    if (!f.items.empty()) {
      bool marker_found = false;
      for (const auto& it : f.items) marker_found = marker_found || it == f.marker;
      if (!marker_found)
        v.push_back("marker " + f.marker + " of factor " + f.name + " is not one of its items");
    }
  }
  for (const auto& [item, count] : item_counts)
    if (count > 1) v.push_back("item " + item + " appears in more than one factor");
  return v;
}

std::string to_string(Attention a) {
  switch (a) {
    case Attention::No: return "No";
    case Attention::Yes: return "Yes";
    case Attention::DontKnow: return "DontKnow";
    case Attention::Missing: return "Missing";
  }
  return "Missing";
}

Attention attention_from_string(const std::string& s) {
  if (s == "Yes") return Attention::Yes;
  if (s == "No") return Attention::No;
  if (s == "DontKnow" || s == "I don't know") return Attention::DontKnow;
  return Attention::Missing;
}

std::string scale_to_json(const ScaleDefinition& def) {
  nlohmann::json j;
  j["name"] = def.name;
  j["stem"] = def.stem;
  j["response_min"] = def.response_min;
  j["response_max"] = def.response_max;
  j["factors"] = nlohmann::json::array();
  for (const auto& f : def.factors) {
    nlohmann::json jf;
    jf["name"] = f.name;
    jf["items"] = f.items;
    jf["marker"] = f.marker;
    j["factors"].push_back(jf);
  }
  return j.dump(2) + "\n";
}

ScaleDefinition scale_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scale file is not valid JSON: ") + e.what());
  }
  ScaleDefinition def;
  try {
    def.name = j.at("name").get<std::string>();
    def.stem = j.at("stem").get<std::string>();
    def.response_min = j.at("response_min").get<int>();
    def.response_max = j.at("response_max").get<int>();
    for (const auto& jf : j.at("factors")) {
      FactorDef f;
      f.name = jf.at("name").get<std::string>();
      f.items = jf.at("items").get<std::vector<std::string>>();
      f.marker = jf.contains("marker") ? jf.at("marker").get<std::string>()
                                       : (f.items.empty() ? std::string() : f.items.front());
      def.factors.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scale file is missing required fields: ") + e.what());
  }
  return def;
}

void save_scale(const ScaleDefinition& def, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ParseError("cannot open scale file for writing: " + file.string());
  out << scale_to_json(def);
}

ScaleDefinition load_scale(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open scale file: " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return scale_from_json(buf.str());
}

}  // namespace mcms

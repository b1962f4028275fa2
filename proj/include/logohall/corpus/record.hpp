#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/digest.hpp"
#include "logohall/common/error.hpp"
#include "logohall/common/rng.hpp"
#include "logohall/corpus/buckets.hpp"

namespace logohall {

struct LogoRecord {
  std::string id;
  std::string image_path;
  Category category = Category::PureSymbol;
  bool hard60 = false;
  std::optional<std::string> gt_text;
  std::optional<ColorBucket> color_bucket;
  std::optional<ShapeBucket> shape_bucket;
  std::vector<std::string> flags;

  bool has_text() const { return category != Category::PureSymbol; }
};

// Returns an empty string when the record is valid, otherwise the reason.
inline std::string record_violation(const LogoRecord& r) {
  if (r.id.empty()) return "id is empty";
  if (r.image_path.empty()) return "image_path is empty";
  if (r.category == Category::PureSymbol && r.gt_text.has_value())
    return "PureSymbol record must not carry gt_text";
  if (r.category != Category::PureSymbol && (!r.gt_text || r.gt_text->empty()))
    return std::string(to_string(r.category)) + " record requires a non-empty gt_text";
  if (r.hard60 && r.category == Category::PureSymbol) return "hard60 record must contain text";
  return {};
}

inline void validate_record(const LogoRecord& r) {
  if (auto why = record_violation(r); !why.empty())
    throw InvariantError("record '" + r.id + "': " + why);
}

inline nlohmann::json record_to_json(const LogoRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["image_path"] = r.image_path;
  j["category"] = std::string(to_string(r.category));
  j["hard60"] = r.hard60;
  j["gt_text"] = r.gt_text ? nlohmann::json(*r.gt_text) : nlohmann::json(nullptr);
  j["color_bucket"] = r.color_bucket ? nlohmann::json(std::string(to_string(*r.color_bucket))) : nlohmann::json(nullptr);
  j["shape_bucket"] = r.shape_bucket ? nlohmann::json(std::string(to_string(*r.shape_bucket))) : nlohmann::json(nullptr);
  if (!r.flags.empty()) j["flags"] = r.flags;
  return j;
}

namespace detail {

inline std::string manifest_where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

inline std::optional<std::string> optional_string(const nlohmann::json& j, const char* key,
                                                  const std::string& where) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) throw ConfigError(where + "key '" + key + "' must be a string or null");
  return j[key].get<std::string>();
}

}  // namespace detail

// Parses one manifest line. `where` prefixes error messages.
inline LogoRecord parse_record(const std::string& line, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(where + "parse error: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(where + "parse error: expected an object");
  LogoRecord r;
  for (const char* key : {"id", "image_path", "category"}) {
    if (!j.contains(key) || !j[key].is_string())
      throw ConfigError(where + "parse error: missing or non-string key '" + key + "'");
  }
  r.id = j["id"].get<std::string>();
  r.image_path = j["image_path"].get<std::string>();
  const auto cat = parse_category(j["category"].get<std::string>());
  if (!cat) throw ConfigError(where + "parse error: unknown category '" + j["category"].get<std::string>() + "'");
  r.category = *cat;
  if (!j.contains("hard60") || !j["hard60"].is_boolean())
    throw ConfigError(where + "parse error: missing or non-boolean key 'hard60'");
  r.hard60 = j["hard60"].get<bool>();
  r.gt_text = detail::optional_string(j, "gt_text", where);
  if (auto c = detail::optional_string(j, "color_bucket", where)) {
    r.color_bucket = parse_color(*c);
    if (!r.color_bucket) throw ConfigError(where + "parse error: unknown color_bucket '" + *c + "'");
  }
  if (auto s = detail::optional_string(j, "shape_bucket", where)) {
    r.shape_bucket = parse_shape(*s);
    if (!r.shape_bucket) throw ConfigError(where + "parse error: unknown shape_bucket '" + *s + "'");
  }
  if (j.contains("flags")) {
    if (!j["flags"].is_array()) throw ConfigError(where + "parse error: 'flags' must be an array");
    for (const auto& f : j["flags"]) {
      if (!f.is_string()) throw ConfigError(where + "parse error: 'flags' entries must be strings");
      r.flags.push_back(f.get<std::string>());
    }
  }
  if (auto why = record_violation(r); !why.empty())
    throw InvariantError(where + "record '" + r.id + "': " + why);
  return r;
}

/// Reads a line-delimited manifest. Blank lines are skipped; ids must be unique.
inline std::vector<LogoRecord> parse_manifest(std::istream& in, const std::string& source = "<manifest>") {
  std::vector<LogoRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = detail::manifest_where(source, lineno);
    auto rec = parse_record(line, where);
    if (!seen.insert(rec.id).second) throw ConfigError(where + "duplicate id '" + rec.id + "'");
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<LogoRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest: " + path.string());
  return parse_manifest(in, path.string());
}

inline void write_manifest(std::ostream& out, const std::vector<LogoRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline void save_manifest(const std::filesystem::path& path, const std::vector<LogoRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest: " + path.string());
  write_manifest(out, records);
}

// Resolves a record's image path against the manifest's directory.
inline std::filesystem::path resolve_image_path(const std::filesystem::path& manifest, const LogoRecord& r) {
  std::filesystem::path p(r.image_path);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

enum class StratifyBy { Category, Color, Shape, Hard60 };

struct Stratum {
  std::string group;
  std::vector<LogoRecord> records;
};

inline std::vector<std::string> stratum_labels(StratifyBy by) {
  std::vector<std::string> out;
  switch (by) {
    case StratifyBy::Category:
      for (auto c : kAllCategories) out.emplace_back(to_string(c));
      break;
    case StratifyBy::Color:
      for (auto c : kAllColors) out.emplace_back(to_string(c));
      break;
    case StratifyBy::Shape:
      for (auto s : kAllShapes) out.emplace_back(to_string(s));
      break;
    case StratifyBy::Hard60:
      out = {"Hard60", "NotHard60"};
      break;
  }
  return out;
}

inline std::optional<std::string> stratum_of(const LogoRecord& r, StratifyBy by) {
  switch (by) {
    case StratifyBy::Category: return std::string(to_string(r.category));
    case StratifyBy::Color:
      if (!r.color_bucket) return std::nullopt;
      return std::string(to_string(*r.color_bucket));
    case StratifyBy::Shape:
      if (!r.shape_bucket) return std::nullopt;
      return std::string(to_string(*r.shape_bucket));
    case StratifyBy::Hard60: return std::string(r.hard60 ? "Hard60" : "NotHard60");
  }
  return std::nullopt;
}

/// Equal-size random sample from every group of a family. Records without an
/// assignment for the family are ignored. Samples keep manifest order.
inline std::vector<Stratum> stratify(const std::vector<LogoRecord>& records, StratifyBy by,
                                     std::size_t per_group, std::uint64_t seed) {
  const auto labels = stratum_labels(by);
  std::map<std::string, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (auto g = stratum_of(records[i], by)) pools[*g].push_back(i);

  std::ostringstream shortfall;
  for (const auto& g : labels) {
    const std::size_t have = pools[g].size();
    if (have < per_group) {
      if (shortfall.tellp() > 0) shortfall << "; ";
      shortfall << g << " has " << have << ", shortfall " << (per_group - have);
    }
  }
  if (shortfall.tellp() > 0)
    throw ConfigError("stratify: insufficient group population (need " + std::to_string(per_group) +
                      " per group): " + shortfall.str());

  std::vector<Stratum> out;
  for (const auto& g : labels) {
    const auto& pool = pools[g];
    Rng rng(first_u64_le(Sha256{}.field(seed).field(std::string_view("stratify")).field(g).finish()));
    auto picks = rng.sample_without_replacement(pool.size(), per_group);
    std::sort(picks.begin(), picks.end());
    Stratum s{g, {}};
    for (auto p : picks) s.records.push_back(records[pool[p]]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace logohall

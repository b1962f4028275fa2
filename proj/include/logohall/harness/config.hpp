#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/digest.hpp"
#include "logohall/common/error.hpp"
#include "logohall/perturb/perturb.hpp"
#include "logohall/querent/transport.hpp"
#include "logohall/synth/planted.hpp"
#include "logohall/version.hpp"

namespace logohall {

enum class Stage { Bias, Perturb, Probe, SynthCheck };

inline constexpr std::array<Stage, 4> kAllStages{Stage::Bias, Stage::Perturb, Stage::Probe, Stage::SynthCheck};

constexpr std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Bias: return "bias";
    case Stage::Perturb: return "perturb";
    case Stage::Probe: return "probe";
    case Stage::SynthCheck: return "synth-check";
  }
  return "?";
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

struct SynthSettings {
  std::size_t d = 512;
  std::size_t s = 32;
  std::size_t M = 2000;
  double signal = 5.2996;  // ||w*||; Bayes accuracy ~0.9 at d=512, s=32
  double b_star = -2.0;
  bool center_logit = true;
  NoiseKind noise = NoiseKind::Gaussian;
  bool write_dataset = false;
  bool cross_validate = false;
};

enum class SelectionMode { Probe, Activation };

struct ProbeSettings {
  std::string source = "synth";  // "synth" or "embeddings"
  std::string embeddings_dir;    // <logo_id>.lemb files
  std::string labels;            // JSONL {logo_id, label}; empty selects by activation
  double C = 0.01;
  std::optional<std::size_t> k = 32;  // nullopt: choose by cross-validation
  std::vector<std::size_t> ks{8, 16, 32, 64, 128};
  int folds = 5;
  SelectionMode selection = SelectionMode::Probe;
  // Optional recorded reports from masked generation runs.
  std::string base_report, targeted_report, placebo_report;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string manifest;
  std::string endpoints;
  std::string output_dir = "out";
  std::string prompt_id = kDefaultPromptId;
  RotationProfile rotation = RotationProfile::Default;
  std::uint64_t root_seed = 0;
  std::uint64_t replicates = 1;
  std::vector<Stage> stages;
  std::vector<PerturbationKind> kinds{kAllPerturbations.begin(), kAllPerturbations.end()};
  ProbeSettings probe;
  SynthSettings synth;

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
  std::filesystem::path out() const { return resolve(output_dir); }
  bool has(Stage s) const { return std::find(stages.begin(), stages.end(), s) != stages.end(); }
};

// Every stage seed derives from the root seed and a stage label.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  return first_u64_le(Sha256{}.field(root).field(std::string_view("stage-seed")).field(label).finish());
}

inline nlohmann::json run_seeds(const RunConfig& c) {
  nlohmann::json s{{"root", c.root_seed}};
  for (const char* label : {"synth-world", "placebo", "cv", "calibration"}) s[label] = derive_seed(c.root_seed, label);
  return s;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json stages = nlohmann::json::array(), kinds = nlohmann::json::array();
  for (auto s : c.stages) stages.push_back(std::string(to_string(s)));
  for (auto k : c.kinds) kinds.push_back(std::string(to_string(k)));
  nlohmann::json probe{{"source", c.probe.source},
                       {"embeddings_dir", c.probe.embeddings_dir},
                       {"labels", c.probe.labels},
                       {"C", c.probe.C},
                       {"k", c.probe.k ? nlohmann::json(*c.probe.k) : nlohmann::json("cv")},
                       {"ks", c.probe.ks},
                       {"folds", c.probe.folds},
                       {"selection", c.probe.selection == SelectionMode::Probe ? "probe" : "activation"},
                       {"base_report", c.probe.base_report},
                       {"targeted_report", c.probe.targeted_report},
                       {"placebo_report", c.probe.placebo_report}};
  nlohmann::json synth{{"d", c.synth.d},
                       {"s", c.synth.s},
                       {"M", c.synth.M},
                       {"signal", c.synth.signal},
                       {"b_star", c.synth.b_star},
                       {"center_logit", c.synth.center_logit},
                       {"noise", c.synth.noise == NoiseKind::Gaussian ? "gaussian" : "student_t5"},
                       {"write_dataset", c.synth.write_dataset},
                       {"cross_validate", c.synth.cross_validate}};
  return {{"manifest", c.manifest},
          {"endpoints", c.endpoints},
          {"output_dir", c.output_dir},
          {"prompt_id", c.prompt_id},
          {"rotation_profile", c.rotation == RotationProfile::Default ? "default" : "appendix"},
          {"seed", c.root_seed},
          {"replicates", c.replicates},
          {"stages", stages},
          {"perturbations", kinds},
          {"probe", probe},
          {"synth", synth}};
}

inline std::string config_digest(const RunConfig& c) { return sha256_hex(config_to_json(c).dump()); }

inline nlohmann::json provenance(const RunConfig& c) {
  return {{"config_digest", config_digest(c)},
          {"seeds", run_seeds(c)},
          {"versions", {{"logohall", kVersion}, {"cache_key", "cache-v1"}, {"lemb", 1}, {"prompt_id", c.prompt_id}}}};
}

namespace detail {

template <typename T>
T yaml_get(const YAML::Node& n, const char* key, T fallback) {
  if (const auto v = n[key]) return v.as<T>();
  return fallback;
}

inline void reject_unknown_keys(const YAML::Node& n, std::initializer_list<const char*> known, const std::string& where) {
  if (!n || !n.IsMap()) return;
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& yaml_text, const std::filesystem::path& base_dir,
                                  const std::string& source = "<config>") {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    const auto root = YAML::Load(yaml_text);
    if (!root.IsMap()) throw ConfigError(source + ": expected a mapping at top level");
    detail::reject_unknown_keys(root,
                                {"manifest", "endpoints", "output_dir", "prompt_id", "rotation_profile", "seed",
                                 "replicates", "stages", "perturbations", "probe", "synth"},
                                source);
    c.manifest = detail::yaml_get<std::string>(root, "manifest", "");
    c.endpoints = detail::yaml_get<std::string>(root, "endpoints", "");
    c.output_dir = detail::yaml_get<std::string>(root, "output_dir", c.output_dir);
    c.prompt_id = detail::yaml_get<std::string>(root, "prompt_id", c.prompt_id);
    const auto profile = detail::yaml_get<std::string>(root, "rotation_profile", "default");
    if (profile == "default") {
      c.rotation = RotationProfile::Default;
    } else if (profile == "appendix") {
      c.rotation = RotationProfile::Appendix;
    } else {
      throw ConfigError(source + ": rotation_profile must be 'default' or 'appendix'");
    }
    c.root_seed = detail::yaml_get<std::uint64_t>(root, "seed", 0);
    c.replicates = detail::yaml_get<std::uint64_t>(root, "replicates", 1);
    if (c.replicates < 1) throw ConfigError(source + ": replicates must be >= 1");
    if (const auto st = root["stages"]) {
      for (const auto& s : st) {
        const auto name = s.as<std::string>();
        const auto parsed = parse_stage(name);
        if (!parsed) throw ConfigError(source + ": unknown stage '" + name + "'");
        if (!c.has(*parsed)) c.stages.push_back(*parsed);
      }
    }
    if (const auto ks = root["perturbations"]) {
      c.kinds.clear();
      for (const auto& k : ks) {
        const auto name = k.as<std::string>();
        const auto parsed = parse_perturbation(name);
        if (!parsed) throw ConfigError(source + ": unknown perturbation '" + name + "'");
        c.kinds.push_back(*parsed);
      }
    }
    if (const auto p = root["probe"]) {
      detail::reject_unknown_keys(p,
                                  {"source", "embeddings_dir", "labels", "C", "k", "ks", "folds", "selection",
                                   "base_report", "targeted_report", "placebo_report"},
                                  source + ": probe");
      auto& ps = c.probe;
      ps.source = detail::yaml_get<std::string>(p, "source", ps.source);
      if (ps.source != "synth" && ps.source != "embeddings")
        throw ConfigError(source + ": probe.source must be 'synth' or 'embeddings'");
      ps.embeddings_dir = detail::yaml_get<std::string>(p, "embeddings_dir", "");
      ps.labels = detail::yaml_get<std::string>(p, "labels", "");
      ps.C = detail::yaml_get<double>(p, "C", ps.C);
      if (const auto k = p["k"]) {
        if (k.as<std::string>() == "cv") {
          ps.k.reset();
        } else {
          ps.k = k.as<std::size_t>();
        }
      }
      if (const auto ks = p["ks"]) ps.ks = ks.as<std::vector<std::size_t>>();
      ps.folds = detail::yaml_get<int>(p, "folds", ps.folds);
      const auto sel = detail::yaml_get<std::string>(p, "selection", "probe");
      if (sel == "probe") {
        ps.selection = SelectionMode::Probe;
      } else if (sel == "activation") {
        ps.selection = SelectionMode::Activation;
      } else {
        throw ConfigError(source + ": probe.selection must be 'probe' or 'activation'");
      }
      ps.base_report = detail::yaml_get<std::string>(p, "base_report", "");
      ps.targeted_report = detail::yaml_get<std::string>(p, "targeted_report", "");
      ps.placebo_report = detail::yaml_get<std::string>(p, "placebo_report", "");
    }
    if (const auto s = root["synth"]) {
      detail::reject_unknown_keys(
          s, {"d", "s", "M", "signal", "b_star", "center_logit", "noise", "write_dataset", "cross_validate"},
          source + ": synth");
      auto& ss = c.synth;
      ss.d = detail::yaml_get<std::size_t>(s, "d", ss.d);
      ss.s = detail::yaml_get<std::size_t>(s, "s", ss.s);
      ss.M = detail::yaml_get<std::size_t>(s, "M", ss.M);
      ss.signal = detail::yaml_get<double>(s, "signal", ss.signal);
      ss.b_star = detail::yaml_get<double>(s, "b_star", ss.b_star);
      ss.center_logit = detail::yaml_get<bool>(s, "center_logit", ss.center_logit);
      const auto noise = detail::yaml_get<std::string>(s, "noise", "gaussian");
      if (noise == "gaussian") {
        ss.noise = NoiseKind::Gaussian;
      } else if (noise == "student_t5") {
        ss.noise = NoiseKind::StudentT5;
      } else {
        throw ConfigError(source + ": synth.noise must be 'gaussian' or 'student_t5'");
      }
      ss.write_dataset = detail::yaml_get<bool>(s, "write_dataset", ss.write_dataset);
      ss.cross_validate = detail::yaml_get<bool>(s, "cross_validate", ss.cross_validate);
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read run config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path(), path.string());
}

// Checks that every path the selected stages need exists.
inline void validate_run_config(const RunConfig& c) {
  auto need_file = [&](const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("run config: ") + what + " is required by the selected stages");
    if (!std::filesystem::exists(c.resolve(p)))
      throw ConfigError(std::string("run config: ") + what + " not found: " + c.resolve(p).string());
  };
  if (c.has(Stage::Bias) || c.has(Stage::Perturb)) {
    need_file(c.manifest, "manifest");
    need_file(c.endpoints, "endpoints");
    prompt_text(c.prompt_id);
  }
  if (c.has(Stage::Perturb) && c.kinds.empty()) throw ConfigError("run config: perturbation list is empty");
  if (c.has(Stage::Probe)) {
    if (c.probe.source == "embeddings") {
      need_file(c.probe.embeddings_dir, "probe.embeddings_dir");
      if (!c.probe.labels.empty()) need_file(c.probe.labels, "probe.labels");
    }
    for (const auto* r : {&c.probe.base_report, &c.probe.targeted_report, &c.probe.placebo_report})
      if (!r->empty()) need_file(*r, "probe report");
    if (!c.probe.k && c.probe.ks.empty()) throw ConfigError("run config: probe.ks is empty");
  }
  if (c.has(Stage::Probe) || c.has(Stage::SynthCheck)) {
    if (c.synth.s < 1 || c.synth.s > c.synth.d) throw ConfigError("run config: synth needs 1 <= s <= d");
    if (c.synth.M < 2) throw ConfigError("run config: synth.M must be >= 2");
  }
}

}  // namespace logohall

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/error.hpp"

namespace logohall {

inline constexpr const char* kNoPerturbation = "none";

// One (model, logo, perturbation, prompt) query outcome.
struct PredictionRecord {
  std::string logo_id;
  std::string model_id;
  std::string perturbation = kNoPerturbation;
  std::string prompt_id;
  std::string raw_response;
  std::optional<std::string> emitted_text;
  int y_hat = 0;
  std::optional<bool> exact_match;
  std::optional<double> prob;
  std::string prob_source;  // "model", "probe" or empty
  std::string cache_key;
  std::string timestamp;
  std::vector<std::string> flags;
};

inline std::string prediction_violation(const PredictionRecord& r) {
  if (r.logo_id.empty()) return "logo_id is empty";
  if (r.y_hat != 0 && r.y_hat != 1) return "y_hat must be 0 or 1";
  if ((r.y_hat == 1) != r.emitted_text.has_value()) return "y_hat must be 1 exactly when emitted_text is present";
  if (r.prob && !(*r.prob >= 0.0 && *r.prob <= 1.0)) return "prob outside [0,1]";
  return {};
}

inline void validate_prediction(const PredictionRecord& r) {
  if (auto why = prediction_violation(r); !why.empty())
    throw InvariantError("prediction '" + r.logo_id + "': " + why);
}

inline nlohmann::json prediction_to_json(const PredictionRecord& r) {
  using nlohmann::json;
  json j;
  j["logo_id"] = r.logo_id;
  j["model_id"] = r.model_id;
  j["perturbation"] = r.perturbation;
  j["prompt_id"] = r.prompt_id;
  j["raw_response"] = r.raw_response;
  j["emitted_text"] = r.emitted_text ? json(*r.emitted_text) : json(nullptr);
  j["y_hat"] = r.y_hat;
  j["exact_match"] = r.exact_match ? json(*r.exact_match) : json(nullptr);
  j["prob"] = r.prob ? json(*r.prob) : json(nullptr);
  j["prob_source"] = r.prob_source;
  j["cache_key"] = r.cache_key;
  j["timestamp"] = r.timestamp;
  j["flags"] = r.flags;
  return j;
}

inline PredictionRecord prediction_from_json(const nlohmann::json& j) {
  PredictionRecord r;
  try {
    r.logo_id = j.at("logo_id").get<std::string>();
    r.model_id = j.value("model_id", "");
    r.perturbation = j.value("perturbation", kNoPerturbation);
    r.prompt_id = j.value("prompt_id", "");
    r.raw_response = j.value("raw_response", "");
    if (j.contains("emitted_text") && !j["emitted_text"].is_null()) r.emitted_text = j["emitted_text"].get<std::string>();
    r.y_hat = j.at("y_hat").get<int>();
    if (j.contains("exact_match") && !j["exact_match"].is_null()) r.exact_match = j["exact_match"].get<bool>();
    if (j.contains("prob") && !j["prob"].is_null()) r.prob = j["prob"].get<double>();
    r.prob_source = j.value("prob_source", "");
    r.cache_key = j.value("cache_key", "");
    r.timestamp = j.value("timestamp", "");
    if (j.contains("flags")) r.flags = j["flags"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("prediction record: ") + e.what());
  }
  validate_prediction(r);
  return r;
}

inline void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& records) {
  for (const auto& r : records) out << prediction_to_json(r).dump() << '\n';
}

inline void save_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write predictions: " + path.string());
  write_predictions(out, records);
}

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read predictions: " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace logohall

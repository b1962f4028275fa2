#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "json.hpp"

#include "logohall/common/error.hpp"

namespace logohall {

struct CachedResponse {
  std::string response;
  std::string timestamp;
};

// Response cache keyed by hex digest. Backed by an append-only JSONL file
// when a path is given; readers share a lock, appends are serialized.
class ResponseCache {
 public:
  ResponseCache() = default;

  explicit ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    if (std::filesystem::exists(path_)) load();
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw ConfigError("cannot open cache for append: " + path_.string());
  }

  std::optional<CachedResponse> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  // First writer wins; later puts for the same key are ignored.
  void put(const std::string& key, const std::string& model_id, const std::string& prompt_id,
           const CachedResponse& value) {
    std::unique_lock lock(mu_);
    if (!entries_.emplace(key, value).second) return;
    if (out_.is_open()) {
      nlohmann::json j{{"key", key},
                       {"model_id", model_id},
                       {"prompt_id", prompt_id},
                       {"response", value.response},
                       {"timestamp", value.timestamp}};
      out_ << j.dump() << '\n';
      out_.flush();
    }
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }

 private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        entries_.emplace(j.at("key").get<std::string>(),
                         CachedResponse{j.at("response").get<std::string>(), j.value("timestamp", "")});
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path_.string() + ":" + std::to_string(n) + ": bad cache entry: " + e.what());
      }
    }
  }

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<std::string, CachedResponse> entries_;
  std::ofstream out_;
};

}  // namespace logohall

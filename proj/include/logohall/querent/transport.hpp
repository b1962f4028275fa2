#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/error.hpp"
#include "logohall/corpus/buckets.hpp"
#include "logohall/querent/prediction.hpp"

namespace logohall {

inline constexpr const char* kDefaultPromptId = "read-text-v1";

// Prompt registry. The protocol lines make the reply machine-checkable.
inline std::string prompt_text(const std::string& prompt_id) {
  if (prompt_id == kDefaultPromptId)
    return "Look at this logo and transcribe only the letters, digits or words that are actually "
           "printed in it. Do not guess the brand from its appearance. Reply with exactly two lines:\n"
           "TEXT: <the characters you can see>   (or TEXT: NONE if the image contains no characters)\n"
           "CONFIDENCE: <a number between 0 and 1 that the image contains readable text>";
  throw ConfigError("unknown prompt_id '" + prompt_id + "'");
}

// Greedy decoding by default. `replicate` lets a caller draw repeated,
// independently keyed queries for the same image.
struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 64;
  std::uint64_t replicate = 0;

  nlohmann::json to_json() const {
    return {{"max_tokens", max_tokens}, {"replicate", replicate}, {"temperature", temperature}};
  }
};

struct QueryRequest {
  std::string model_id;
  std::string prompt_id;
  std::string prompt;
  std::vector<std::uint8_t> png;  // encoded image sent to the endpoint
  std::string image_digest;       // hex digest of decoded pixels
  DecodingParams decoding;
  // Context the HTTP transport ignores; the mock model keys its behavior on it.
  std::string logo_id;
  std::string perturbation = kNoPerturbation;
};

struct QueryReply {
  std::string text;
  std::string timestamp;
};

enum class FailureKind { Transient, Permanent, Auth, Malformed };

inline const char* to_string(FailureKind k) {
  switch (k) {
    case FailureKind::Transient: return "transient";
    case FailureKind::Permanent: return "permanent";
    case FailureKind::Auth: return "auth";
    case FailureKind::Malformed: return "malformed";
  }
  return "?";
}

// Thrown by a transport for one failed attempt.
class TransportError : public UpstreamError {
 public:
  TransportError(FailureKind kind, int status, const std::string& what)
      : UpstreamError(what), kind_(kind), status_(status) {}
  FailureKind kind() const noexcept { return kind_; }
  int status() const noexcept { return status_; }

 private:
  FailureKind kind_;
  int status_;
};

struct AttemptLog {
  int attempt = 0;
  int status = 0;  // HTTP status, 0 when no response arrived
  std::string outcome;
};

// Raised after the retry policy gives up; carries every attempt.
class QueryFailure : public UpstreamError {
 public:
  QueryFailure(FailureKind kind, std::vector<AttemptLog> attempts, const std::string& what)
      : UpstreamError(what), kind_(kind), attempts_(std::move(attempts)) {}
  FailureKind kind() const noexcept { return kind_; }
  const std::vector<AttemptLog>& attempts() const noexcept { return attempts_; }

 private:
  FailureKind kind_;
  std::vector<AttemptLog> attempts_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual QueryReply send(const QueryRequest& request) = 0;
  // False lets the caller skip PNG encoding.
  virtual bool wants_png() const { return true; }
  // Extra cache-key material for transports whose reply depends on more than
  // the pixels (the mock keys on the logo and trigger).
  virtual std::string key_context(const QueryRequest&) const { return {}; }
};

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 500;
  double backoff_multiplier = 2.0;
};

// Mock model behavior. Rates and accuracies are keyed by trigger: a
// perturbation kind name, "none", or the fallback "default".
struct MockConfig {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> planted_priors;  // logo_id -> brand
  std::optional<std::string> default_prior;           // plants every symbol logo
  std::map<std::string, double> hallucination_rate{{"default", 0.0}};
  std::map<std::string, double> text_accuracy{{"default", 1.0}};
  bool free_form = false;  // answer in prose instead of the protocol lines
  struct Entry {
    Category category = Category::PureSymbol;
    std::optional<std::string> gt_text;
  };
  std::map<std::string, Entry> catalog;  // logo_id -> what the mock "sees"
};

enum class TransportKind { HttpChatWithImage, Mock };

struct ModelEndpoint {
  std::string model_id;
  TransportKind transport = TransportKind::Mock;
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string remote_model;  // model name sent in the request; defaults to model_id
  std::string auth_env;      // env var holding the bearer token
  int timeout_s = 60;
  int max_concurrency = 1;
  RetryPolicy retry;
  DecodingParams decoding;
  MockConfig mock;
};

inline void validate_endpoint(const ModelEndpoint& e) {
  if (e.model_id.empty()) throw ConfigError("endpoint: model_id is empty");
  if (e.max_concurrency < 1) throw ConfigError("endpoint '" + e.model_id + "': max_concurrency must be >= 1");
  if (e.retry.max_attempts < 1) throw ConfigError("endpoint '" + e.model_id + "': retry.max_attempts must be >= 1");
  if (e.retry.backoff_ms < 0) throw ConfigError("endpoint '" + e.model_id + "': retry.backoff_ms must be >= 0");
  if (e.transport == TransportKind::HttpChatWithImage && e.base_url.empty())
    throw ConfigError("endpoint '" + e.model_id + "': base_url is required for http transport");
  auto in_unit = [&](const std::map<std::string, double>& m, const char* what) {
    for (const auto& [k, v] : m)
      if (!(v >= 0.0 && v <= 1.0))
        throw ConfigError("endpoint '" + e.model_id + "': " + what + "[" + k + "] outside [0,1]");
  };
  in_unit(e.mock.hallucination_rate, "hallucination_rate");
  in_unit(e.mock.text_accuracy, "text_accuracy");
}

}  // namespace logohall

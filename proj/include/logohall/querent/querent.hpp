#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <thread>

#include "logohall/common/digest.hpp"
#include "logohall/corpus/image.hpp"
#include "logohall/corpus/record.hpp"
#include "logohall/querent/cache.hpp"
#include "logohall/querent/http.hpp"
#include "logohall/querent/mock.hpp"
#include "logohall/querent/prediction.hpp"
#include "logohall/querent/text.hpp"
#include "logohall/querent/transport.hpp"

namespace logohall {

inline std::string image_digest(const ImageBuffer& img) {
  Sha256 h;
  h.field("image").field(static_cast<std::uint64_t>(img.width())).field(static_cast<std::uint64_t>(img.height()));
  h.field(static_cast<std::uint64_t>(img.channels())).field(img.bytes());
  return h.hex();
}

inline std::string make_cache_key(const std::string& image_hex, const std::string& prompt_id,
                                  const std::string& model_id, const DecodingParams& decoding,
                                  const std::string& context = {}) {
  Sha256 h;
  h.field("cache-v1").field(image_hex).field(prompt_id).field(model_id).field(decoding.to_json().dump());
  if (!context.empty()) h.field(context);
  return h.hex();
}

struct QueryContext {
  std::string logo_id;
  std::string perturbation = kNoPerturbation;
  std::uint64_t replicate = 0;
};

struct QueryResult {
  std::string response;
  std::string cache_key;
  std::string timestamp;
  bool from_cache = false;
  std::vector<AttemptLog> attempts;
};

struct PredictionJob {
  const LogoRecord* record = nullptr;
  std::function<ImageBuffer()> image;
  std::string perturbation = kNoPerturbation;
  std::uint64_t replicate = 0;
};

class Querent {
 public:
  Querent(ModelEndpoint endpoint, std::shared_ptr<Transport> transport, std::shared_ptr<ResponseCache> cache,
          std::vector<std::string> lexicon = {})
      : ep_(std::move(endpoint)), transport_(std::move(transport)), cache_(std::move(cache)), lexicon_(std::move(lexicon)) {
    validate_endpoint(ep_);
    if (!transport_) throw ConfigError("querent: transport is null");
    if (!cache_) cache_ = std::make_shared<ResponseCache>();
  }

  const ModelEndpoint& endpoint() const { return ep_; }
  std::uint64_t network_calls() const { return network_calls_.load(); }

  QueryResult query(const ImageBuffer& img, const std::string& prompt_id, const QueryContext& ctx = {}) {
    QueryRequest req;
    req.model_id = ep_.model_id;
    req.prompt_id = prompt_id;
    req.prompt = prompt_text(prompt_id);
    req.image_digest = image_digest(img);
    req.decoding = ep_.decoding;
    req.decoding.replicate = ctx.replicate;
    req.logo_id = ctx.logo_id;
    req.perturbation = ctx.perturbation;
    const std::string key =
        make_cache_key(req.image_digest, prompt_id, ep_.model_id, req.decoding, transport_->key_context(req));
    if (auto hit = cache_->get(key)) return {hit->response, key, hit->timestamp, true, {}};

    // Concurrent callers for one key share a single network round trip.
    std::promise<QueryResult> promise;
    std::shared_future<QueryResult> pending;
    {
      std::lock_guard lock(inflight_mu_);
      if (auto hit = cache_->get(key)) return {hit->response, key, hit->timestamp, true, {}};
      if (auto it = inflight_.find(key); it != inflight_.end()) {
        pending = it->second;
      } else {
        inflight_.emplace(key, promise.get_future().share());
      }
    }
    if (pending.valid()) {
      auto r = pending.get();
      r.from_cache = true;
      r.attempts.clear();
      return r;
    }

    if (transport_->wants_png()) req.png = encode_png(img);
    try {
      QueryResult r = send_with_retry(req);
      r.cache_key = key;
      cache_->put(key, ep_.model_id, prompt_id, {r.response, r.timestamp});
      promise.set_value(r);
      finish(key);
      return r;
    } catch (...) {
      promise.set_exception(std::current_exception());
      finish(key);
      throw;
    }
  }

  PredictionRecord predict(const LogoRecord& rec, const ImageBuffer& img, const std::string& prompt_id,
                           const std::string& perturbation = kNoPerturbation, std::uint64_t replicate = 0) {
    const auto q = query(img, prompt_id, {rec.id, perturbation, replicate});
    const auto parsed = parse_structured(q.response, lexicon_);
    const auto verdict = judge(rec, parsed.emitted_text);
    PredictionRecord p;
    p.logo_id = rec.id;
    p.model_id = ep_.model_id;
    p.perturbation = perturbation;
    p.prompt_id = prompt_id;
    p.raw_response = q.response;
    p.emitted_text = parsed.emitted_text;
    p.y_hat = verdict.y_hat;
    p.exact_match = verdict.exact_match;
    if (parsed.confidence) {
      p.prob = parsed.confidence;
      p.prob_source = "model";
    }
    p.cache_key = q.cache_key;
    p.timestamp = q.timestamp;
    p.flags = parsed.flags;
    return p;
  }

  // Runs jobs on at most max_concurrency threads; output order follows input.
  std::vector<PredictionRecord> predict_batch(const std::vector<PredictionJob>& jobs, const std::string& prompt_id) {
    std::vector<PredictionRecord> out(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        try {
          const auto& job = jobs[i];
          if (job.record == nullptr) throw InvariantError("prediction job without record");
          out[i] = predict(*job.record, job.image(), prompt_id, job.perturbation, job.replicate);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(ep_.max_concurrency), jobs.size());
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    return out;
  }

 private:
  QueryResult send_with_retry(const QueryRequest& req) {
    QueryResult r;
    double backoff = ep_.retry.backoff_ms;
    for (int attempt = 1;; ++attempt) {
      ++network_calls_;
      try {
        auto reply = transport_->send(req);
        r.attempts.push_back({attempt, 200, "ok"});
        r.response = std::move(reply.text);
        r.timestamp = std::move(reply.timestamp);
        return r;
      } catch (const TransportError& e) {
        r.attempts.push_back({attempt, e.status(), std::string(to_string(e.kind())) + ": " + e.what()});
        const bool retry = e.kind() == FailureKind::Transient && attempt < ep_.retry.max_attempts;
        if (!retry) {
          std::string msg = "model '" + ep_.model_id + "' failed after " + std::to_string(attempt) + " attempt(s)";
          for (const auto& a : r.attempts) msg += "\n  attempt " + std::to_string(a.attempt) + ": " + a.outcome;
          throw QueryFailure(e.kind(), r.attempts, msg);
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(backoff)));
      backoff *= ep_.retry.backoff_multiplier;
    }
  }

  void finish(const std::string& key) {
    std::lock_guard lock(inflight_mu_);
    inflight_.erase(key);
  }

  ModelEndpoint ep_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  std::vector<std::string> lexicon_;
  std::atomic<std::uint64_t> network_calls_{0};
  std::mutex inflight_mu_;
  std::map<std::string, std::shared_future<QueryResult>> inflight_;
};

inline std::shared_ptr<Transport> make_transport(const ModelEndpoint& ep) {
  if (ep.transport == TransportKind::Mock) return std::make_shared<MockModel>(ep.mock);
  return std::make_shared<HttpChatTransport>(ep);
}

// Brand lexicon for the free-form fallback: every ground-truth string plus
// every planted brand.
inline std::vector<std::string> brand_lexicon(const std::vector<LogoRecord>& records,
                                              const std::vector<ModelEndpoint>& endpoints = {}) {
  std::set<std::string> words;
  for (const auto& r : records)
    if (r.gt_text) words.insert(*r.gt_text);
  for (const auto& e : endpoints) {
    for (const auto& [id, brand] : e.mock.planted_priors) words.insert(brand);
    if (e.mock.default_prior) words.insert(*e.mock.default_prior);
  }
  return {words.begin(), words.end()};
}

namespace detail {

inline std::map<std::string, double> yaml_rate_map(const YAML::Node& node, std::map<std::string, double> fallback) {
  if (!node) return fallback;
  if (node.IsScalar()) return {{"default", node.as<double>()}};
  std::map<std::string, double> out;
  for (const auto& kv : node) out[kv.first.as<std::string>()] = kv.second.as<double>();
  return out;
}

inline ModelEndpoint endpoint_from_yaml(const YAML::Node& n) {
  ModelEndpoint e;
  e.model_id = n["model_id"].as<std::string>("");
  const auto transport = n["transport"].as<std::string>("mock");
  if (transport == "mock") {
    e.transport = TransportKind::Mock;
  } else if (transport == "http") {
    e.transport = TransportKind::HttpChatWithImage;
  } else {
    throw ConfigError("endpoint '" + e.model_id + "': unknown transport '" + transport + "'");
  }
  e.base_url = n["base_url"].as<std::string>("");
  e.path = n["path"].as<std::string>(e.path);
  e.remote_model = n["remote_model"].as<std::string>("");
  e.auth_env = n["auth_env"].as<std::string>("");
  e.timeout_s = n["timeout_s"].as<int>(e.timeout_s);
  e.max_concurrency = n["max_concurrency"].as<int>(e.max_concurrency);
  if (const auto r = n["retry"]) {
    e.retry.max_attempts = r["max_attempts"].as<int>(e.retry.max_attempts);
    e.retry.backoff_ms = r["backoff_ms"].as<int>(e.retry.backoff_ms);
    e.retry.backoff_multiplier = r["backoff_multiplier"].as<double>(e.retry.backoff_multiplier);
  }
  if (const auto d = n["decoding"]) {
    e.decoding.temperature = d["temperature"].as<double>(e.decoding.temperature);
    e.decoding.max_tokens = d["max_tokens"].as<int>(e.decoding.max_tokens);
  }
  if (const auto m = n["mock"]) {
    e.mock.seed = m["seed"].as<std::uint64_t>(0);
    if (const auto p = m["planted_priors"])
      for (const auto& kv : p) e.mock.planted_priors[kv.first.as<std::string>()] = kv.second.as<std::string>();
    if (const auto p = m["default_prior"]) e.mock.default_prior = p.as<std::string>();
    e.mock.hallucination_rate = yaml_rate_map(m["hallucination_rate"], e.mock.hallucination_rate);
    e.mock.text_accuracy = yaml_rate_map(m["text_accuracy"], e.mock.text_accuracy);
    e.mock.free_form = m["free_form"].as<bool>(false);
  }
  validate_endpoint(e);
  return e;
}

}  // namespace detail

// Endpoint config: a YAML document with an `endpoints` list.
inline std::vector<ModelEndpoint> parse_endpoints(const std::string& yaml_text, const std::string& source = "<endpoints>") {
  std::vector<ModelEndpoint> out;
  try {
    const auto root = YAML::Load(yaml_text);
    const auto list = root["endpoints"];
    if (!list || !list.IsSequence()) throw ConfigError(source + ": expected an 'endpoints' list");
    std::set<std::string> seen;
    for (const auto& n : list) {
      auto e = detail::endpoint_from_yaml(n);
      if (!seen.insert(e.model_id).second) throw ConfigError(source + ": duplicate model_id '" + e.model_id + "'");
      out.push_back(std::move(e));
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return out;
}

inline std::vector<ModelEndpoint> load_endpoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read endpoints config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_endpoints(ss.str(), path.string());
}

}  // namespace logohall

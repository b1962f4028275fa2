#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "logohall/common/digest.hpp"
#include "logohall/corpus/record.hpp"
#include "logohall/querent/transport.hpp"

namespace logohall {

inline constexpr const char* kMockTimestamp = "1970-01-01T00:00:00Z";

inline std::map<std::string, MockConfig::Entry> mock_catalog(const std::vector<LogoRecord>& records) {
  std::map<std::string, MockConfig::Entry> out;
  for (const auto& r : records) out[r.id] = {r.category, r.gt_text};
  return out;
}

// Deterministic stand-in for a VLM. Every decision is a hash draw over
// (seed, logo, trigger, image digest, replicate), so a fixed config answers
// byte-identically on every run and in any thread order.
class MockModel final : public Transport {
 public:
  explicit MockModel(MockConfig config) : config_(std::move(config)) {}

  QueryReply send(const QueryRequest& req) override { return {respond(req), kMockTimestamp}; }
  bool wants_png() const override { return false; }
  std::string key_context(const QueryRequest& req) const override { return req.logo_id + '\n' + req.perturbation; }

  std::string respond(const QueryRequest& req) const {
    const auto it = config_.catalog.find(req.logo_id);
    if (it == config_.catalog.end()) return format(std::nullopt, 0.0);
    const auto& entry = it->second;
    const double u = draw(req);
    const auto brand = planted_brand(req.logo_id, entry);
    if (entry.category == Category::PureSymbol) {
      if (!brand) return format(std::nullopt, 0.0);
      const double rate = lookup(config_.hallucination_rate, req.perturbation);
      return u < rate ? format(*brand, rate) : format(std::nullopt, rate);
    }
    const double acc = lookup(config_.text_accuracy, req.perturbation);
    const std::string gt = entry.gt_text.value_or("");
    if (u < acc) return format(gt, acc);
    return format(brand && *brand != gt ? *brand : misread(gt), acc);
  }

  const MockConfig& config() const { return config_; }

 private:
  std::optional<std::string> planted_brand(const std::string& id, const MockConfig::Entry& entry) const {
    if (auto p = config_.planted_priors.find(id); p != config_.planted_priors.end()) return p->second;
    if (entry.category == Category::PureSymbol) return config_.default_prior;
    return std::nullopt;
  }

  static double lookup(const std::map<std::string, double>& m, const std::string& trigger) {
    if (auto it = m.find(trigger); it != m.end()) return it->second;
    if (auto it = m.find("default"); it != m.end()) return it->second;
    return 0.0;
  }

  double draw(const QueryRequest& req) const {
    Sha256 h;
    h.field(config_.seed).field("mock-draw").field(req.logo_id).field(req.perturbation).field(req.image_digest);
    h.field(req.decoding.replicate);
    return static_cast<double>(first_u64_le(h.finish()) >> 11) * 0x1.0p-53;
  }

  static std::string misread(const std::string& gt) {
    if (gt.size() > 1) return gt.substr(0, gt.size() - 1);
    return gt + "X";
  }

  std::string format(const std::optional<std::string>& text, double confidence) const {
    if (config_.free_form) {
      if (!text) return "I can't make out any lettering in this image; it looks like a graphic mark.";
      return "The logo reads \"" + *text + "\".";
    }
    char conf[32];
    std::snprintf(conf, sizeof conf, "%.4f", confidence);
    return "TEXT: " + (text ? *text : std::string("NONE")) + "\nCONFIDENCE: " + conf;
  }

  MockConfig config_;
};

}  // namespace logohall

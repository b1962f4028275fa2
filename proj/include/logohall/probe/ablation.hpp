#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/error.hpp"
#include "logohall/common/rng.hpp"
#include "logohall/metrics/metrics.hpp"
#include "logohall/probe/embedding.hpp"

namespace logohall {

enum class MaskOrigin { Probe, Activation, RandomPlacebo };

inline const char* to_string(MaskOrigin o) {
  switch (o) {
    case MaskOrigin::Probe: return "Probe";
    case MaskOrigin::Activation: return "Activation";
    case MaskOrigin::RandomPlacebo: return "RandomPlacebo";
  }
  return "?";
}

struct AblationMask {
  std::vector<std::size_t> indices;  // sorted, unique
  MaskOrigin origin = MaskOrigin::Probe;
  std::optional<std::uint64_t> seed;  // placebo only

  std::size_t k() const { return indices.size(); }
};

inline AblationMask make_mask(std::vector<std::size_t> indices, MaskOrigin origin,
                              std::optional<std::uint64_t> seed = std::nullopt) {
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
    throw InvariantError("ablation mask: duplicate index");
  return {std::move(indices), origin, seed};
}

inline void check_mask(const AblationMask& mask, std::size_t d) {
  for (auto j : mask.indices)
    if (j >= d)
      throw InvariantError("ablation mask: index " + std::to_string(j) + " outside [0, " + std::to_string(d) + ")");
}

// Zeroes the masked columns in every token; everything else is copied as is.
inline EmbeddingMatrix ablate(const EmbeddingMatrix& z, const AblationMask& mask) {
  check_mask(mask, z.cols);
  EmbeddingMatrix out = z;
  for (std::size_t i = 0; i < out.rows; ++i)
    for (auto j : mask.indices) out.at(i, j) = 0.0f;
  return out;
}

inline std::vector<double> ablate(std::vector<double> z_bar, const AblationMask& mask) {
  check_mask(mask, z_bar.size());
  for (auto j : mask.indices) z_bar[j] = 0.0;
  return z_bar;
}

inline AblationMask random_placebo(std::size_t d, std::size_t k, std::uint64_t seed) {
  if (k > d) throw ConfigError("random_placebo: k=" + std::to_string(k) + " exceeds d=" + std::to_string(d));
  Rng rng(seed);
  return make_mask(rng.sample_without_replacement(d, k), MaskOrigin::RandomPlacebo, seed);
}

inline nlohmann::json mask_to_json(const AblationMask& m) {
  return {{"origin", to_string(m.origin)},
          {"k", m.k()},
          {"seed", m.seed ? nlohmann::json(*m.seed) : nlohmann::json(nullptr)},
          {"indices", m.indices}};
}

inline AblationMask mask_from_json(const nlohmann::json& j) {
  try {
    const auto origin = j.at("origin").get<std::string>();
    MaskOrigin o;
    if (origin == "Probe") {
      o = MaskOrigin::Probe;
    } else if (origin == "Activation") {
      o = MaskOrigin::Activation;
    } else if (origin == "RandomPlacebo") {
      o = MaskOrigin::RandomPlacebo;
    } else {
      throw ConfigError("mask file: unknown origin '" + origin + "'");
    }
    std::optional<std::uint64_t> seed;
    if (j.contains("seed") && !j["seed"].is_null()) seed = j["seed"].get<std::uint64_t>();
    auto mask = make_mask(j.at("indices").get<std::vector<std::size_t>>(), o, seed);
    if (j.contains("k") && j["k"].get<std::size_t>() != mask.k()) throw ConfigError("mask file: k does not match indices");
    return mask;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mask file: ") + e.what());
  }
}

struct Deltas {
  std::optional<double> d_acc_text;
  std::optional<double> d_hall;
  std::vector<std::string> warnings;
};

// Signed change from base to cond. A targeted mask is expected to give
// d_hall < 0 with a small d_acc_text.
inline Deltas deltas(const MetricsReport& base, const MetricsReport& cond) {
  Deltas out;
  if (base.acc_text && cond.acc_text) out.d_acc_text = *cond.acc_text - *base.acc_text;
  if (base.hall && cond.hall) out.d_hall = *cond.hall - *base.hall;
  if (base.n_text != cond.n_text || base.n_symbol != cond.n_symbol)
    out.warnings.push_back("population mismatch: base has " + std::to_string(base.n_text) + " text / " +
                           std::to_string(base.n_symbol) + " symbol records, " + cond.condition + " has " +
                           std::to_string(cond.n_text) + " / " + std::to_string(cond.n_symbol));
  else if ((!base.text_ids.empty() && !cond.text_ids.empty() && base.text_ids != cond.text_ids) ||
           (!base.symbol_ids.empty() && !cond.symbol_ids.empty() && base.symbol_ids != cond.symbol_ids))
    out.warnings.push_back("population mismatch: logo ids differ between base and " + cond.condition);
  return out;
}

}  // namespace logohall

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/digest.hpp"
#include "logohall/common/error.hpp"
#include "logohall/common/rng.hpp"
#include "logohall/probe/ablation.hpp"
#include "logohall/probe/embedding.hpp"
#include "logohall/probe/probe.hpp"

namespace logohall {

enum class NoiseKind { Gaussian, StudentT5 };

// Synthetic embedding world with a known sparse hallucination direction:
//   z = offset + noise_scale * eps,   y ~ Bernoulli(sigmoid(w*.z + b*))
// where w* and offset are zero off the planted support.
struct PlantedWorld {
  std::size_t d = 0;
  std::vector<std::size_t> support;  // sorted
  std::vector<double> w_star;        // length d
  double b_star = 0.0;
  std::vector<double> activation_offset;  // length d; mean of z
  double noise_scale = 1.0;
  NoiseKind noise = NoiseKind::Gaussian;
  std::uint64_t seed = 0;
};

inline void validate_world(const PlantedWorld& w) {
  if (w.support.empty()) throw ConfigError("planted world: support must be non-empty");
  if (w.w_star.size() != w.d || w.activation_offset.size() != w.d)
    throw ConfigError("planted world: w* and offset must have length d");
  std::set<std::size_t> s(w.support.begin(), w.support.end());
  if (s.size() != w.support.size() || *s.rbegin() >= w.d) throw ConfigError("planted world: bad support indices");
  for (std::size_t j = 0; j < w.d; ++j)
    if (!s.count(j) && (w.w_star[j] != 0.0 || w.activation_offset[j] != 0.0))
      throw InvariantError("planted world: w* or offset nonzero off the support");
  if (!(w.noise_scale > 0.0)) throw ConfigError("planted world: noise_scale must be positive");
}

// Planted support of size s with random signs and per-coordinate magnitude
// signal / sqrt(s), so the signal part of the logit has sd `signal`. With
// `center_logit`, the offset on the support is chosen so w*.offset = -b*,
// making the mean logit zero while sigmoid(b*) stays the post-ablation floor.
inline PlantedWorld make_planted_world(std::size_t d, std::size_t s, double signal, double b_star, std::uint64_t seed,
                                       bool center_logit = false, NoiseKind noise = NoiseKind::Gaussian) {
  if (s < 1 || s > d) throw ConfigError("planted world: need 1 <= s <= d");
  PlantedWorld w;
  w.d = d;
  w.b_star = b_star;
  w.seed = seed;
  w.noise = noise;
  Rng rng(first_u64_le(Sha256{}.field(seed).field("planted-world").finish()));
  w.support = rng.sample_without_replacement(d, s);
  std::sort(w.support.begin(), w.support.end());
  w.w_star.assign(d, 0.0);
  w.activation_offset.assign(d, 0.0);
  const double a = signal / std::sqrt(static_cast<double>(s));
  double norm2 = 0.0;
  for (auto j : w.support) {
    w.w_star[j] = rng.bernoulli(0.5) ? a : -a;
    norm2 += a * a;
  }
  if (center_logit && norm2 > 0)
    for (auto j : w.support) w.activation_offset[j] = -b_star * w.w_star[j] / norm2;
  return w;
}

namespace detail {

inline constexpr std::size_t kShardSize = 256;

inline double noise_draw(Rng& rng, NoiseKind k) {
  // Student-t(5) rescaled to unit variance.
  return k == NoiseKind::Gaussian ? rng.normal() : rng.student_t(5) * std::sqrt(3.0 / 5.0);
}

}  // namespace detail

inline double world_logit(const PlantedWorld& w, std::span<const double> z) {
  double m = w.b_star;
  for (auto j : w.support) m += w.w_star[j] * z[j];
  return m;
}

// M samples in shards of 256, each shard with its own derived seed, so the
// output does not depend on how shards are scheduled.
inline std::vector<PooledFeature> generate(const PlantedWorld& w, std::size_t M) {
  validate_world(w);
  std::vector<PooledFeature> out(M);
  for (std::size_t start = 0; start < M; start += detail::kShardSize) {
    const std::uint64_t shard = start / detail::kShardSize;
    Rng rng(first_u64_le(Sha256{}.field(w.seed).field("generate").field(shard).finish()));
    for (std::size_t i = start; i < std::min(M, start + detail::kShardSize); ++i) {
      auto& f = out[i];
      char id[32];
      std::snprintf(id, sizeof id, "synth-%06zu", i);
      f.logo_id = id;
      f.z_bar.resize(w.d);
      for (std::size_t j = 0; j < w.d; ++j)
        f.z_bar[j] = w.activation_offset[j] + w.noise_scale * detail::noise_draw(rng, w.noise);
      f.label = rng.uniform() < detail::sigmoid(world_logit(w, f.z_bar)) ? 1 : 0;
    }
  }
  return out;
}

// Expected accuracy of the generating model's own decision rule.
inline double bayes_accuracy(const PlantedWorld& w, const std::vector<PooledFeature>& features) {
  double s = 0.0;
  for (const auto& f : features) {
    const double p = detail::sigmoid(world_logit(w, f.z_bar));
    s += std::max(p, 1.0 - p);
  }
  return s / static_cast<double>(features.size());
}

inline double recovery_score(std::span<const std::size_t> selected, const PlantedWorld& w) {
  std::set<std::size_t> s(w.support.begin(), w.support.end());
  std::set<std::size_t> sel(selected.begin(), selected.end());
  std::size_t hit = 0;
  for (auto j : sel) hit += s.count(j);
  return static_cast<double>(hit) / static_cast<double>(s.size());
}

struct AblationEffect {
  double before = 0.0;  // mean sigmoid(w*.z + b*)
  double after = 0.0;   // same with the masked coordinates of z zeroed
  double delta() const { return after - before; }
};

inline AblationEffect simulate_ablation_effect(const PlantedWorld& w, const AblationMask& mask, std::size_t M) {
  check_mask(mask, w.d);
  const auto features = generate(w, M);
  AblationEffect e;
  for (const auto& f : features) {
    e.before += detail::sigmoid(world_logit(w, f.z_bar));
    e.after += detail::sigmoid(world_logit(w, ablate(f.z_bar, mask)));
  }
  e.before /= static_cast<double>(M);
  e.after /= static_cast<double>(M);
  return e;
}

// Labels whose marginals are exactly Bernoulli(p_i) but whose sums track
// sum p_i closely: systematic sampling over the probabilities in sorted
// order with one uniform offset.
inline std::vector<int> calibrated_labels(std::span<const double> probs, std::uint64_t seed) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  Rng rng(seed);
  const double u = rng.uniform();
  std::vector<int> y(probs.size(), 0);
  double cum = 0.0;
  for (auto i : order) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw ConfigError("calibrated_labels: probability outside [0,1]");
    const double before = std::floor(cum + u);
    cum += probs[i];
    y[i] = static_cast<int>(std::floor(cum + u) - before);
  }
  return y;
}

inline nlohmann::json world_to_json(const PlantedWorld& w) {
  auto weights = nlohmann::json::array();
  auto offset = nlohmann::json::array();
  for (auto j : w.support) {
    weights.push_back({j, w.w_star[j]});
    offset.push_back({j, w.activation_offset[j]});
  }
  return {{"d", w.d},
          {"s", w.support.size()},
          {"support", w.support},
          {"w_star", weights},
          {"b_star", w.b_star},
          {"activation_offset", offset},
          {"noise_scale", w.noise_scale},
          {"noise", w.noise == NoiseKind::Gaussian ? "gaussian" : "student_t5"},
          {"seed", w.seed}};
}

inline PlantedWorld world_from_json(const nlohmann::json& j) {
  PlantedWorld w;
  try {
    w.d = j.at("d").get<std::size_t>();
    w.support = j.at("support").get<std::vector<std::size_t>>();
    w.w_star.assign(w.d, 0.0);
    w.activation_offset.assign(w.d, 0.0);
    for (const auto& p : j.at("w_star")) w.w_star.at(p.at(0).get<std::size_t>()) = p.at(1).get<double>();
    if (j.contains("activation_offset"))
      for (const auto& p : j["activation_offset"]) w.activation_offset.at(p.at(0).get<std::size_t>()) = p.at(1).get<double>();
    w.b_star = j.at("b_star").get<double>();
    w.noise_scale = j.value("noise_scale", 1.0);
    w.noise = j.value("noise", "gaussian") == "gaussian" ? NoiseKind::Gaussian : NoiseKind::StudentT5;
    w.seed = j.value("seed", std::uint64_t{0});
  } catch (const std::exception& e) {
    throw ConfigError(std::string("world file: ") + e.what());
  }
  std::sort(w.support.begin(), w.support.end());
  validate_world(w);
  return w;
}

// One LEMB file (N=1) per sample plus labels.jsonl and world.json.
inline void write_synth_dataset(const std::filesystem::path& dir, const PlantedWorld& w,
                                const std::vector<PooledFeature>& features) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.jsonl", std::ios::binary);
  for (const auto& f : features) {
    EmbeddingMatrix z;
    z.logo_id = f.logo_id;
    z.rows = 1;
    z.cols = static_cast<std::uint32_t>(f.z_bar.size());
    z.values.assign(f.z_bar.begin(), f.z_bar.end());
    z.source_model = "synth";
    z.layer_tag = "planted";
    save_lemb(dir / (f.logo_id + ".lemb"), z);
    labels << nlohmann::json{{"logo_id", f.logo_id}, {"label", f.label}}.dump() << '\n';
  }
  std::ofstream(dir / "world.json", std::ios::binary) << world_to_json(w).dump(2) << '\n';
}

}  // namespace logohall

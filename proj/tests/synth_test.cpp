#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "logohall/probe/probe.hpp"
#include "logohall/synth/planted.hpp"

using namespace logohall;

namespace {

double label_rate(const std::vector<PooledFeature>& f) {
  double s = 0;
  for (const auto& x : f) s += x.label;
  return s / static_cast<double>(f.size());
}

}  // namespace

TEST(PlantedWorld, Construction) {
  const auto w = make_planted_world(512, 32, 5.0, -2.0, 1);
  EXPECT_EQ(w.support.size(), 32u);
  EXPECT_TRUE(std::is_sorted(w.support.begin(), w.support.end()));
  double n2 = 0;
  for (std::size_t j = 0; j < w.d; ++j) n2 += w.w_star[j] * w.w_star[j];
  EXPECT_NEAR(std::sqrt(n2), 5.0, 1e-12);
  EXPECT_NO_THROW(validate_world(w));

  const auto c = make_planted_world(512, 32, 5.0, -2.0, 1, true);
  EXPECT_EQ(c.support, w.support);
  double dot = 0;
  for (std::size_t j = 0; j < c.d; ++j) dot += c.w_star[j] * c.activation_offset[j];
  EXPECT_NEAR(dot, 2.0, 1e-12);

  auto bad = w;
  bad.w_star[w.support[0] == 0 ? 1 : 0] = 1.0;
  EXPECT_THROW(validate_world(bad), InvariantError);
  EXPECT_THROW(make_planted_world(4, 0, 1.0, 0.0, 1), ConfigError);
  EXPECT_THROW(make_planted_world(4, 5, 1.0, 0.0, 1), ConfigError);
}

TEST(Generate, ZeroWeightsGiveFairCoin) {
  const auto w = make_planted_world(16, 4, 0.0, 0.0, 2);
  const std::size_t M = 10000;
  const double r = label_rate(generate(w, M));
  EXPECT_NEAR(r, 0.5, 4 * std::sqrt(0.25 / M));
}

TEST(Generate, VeryNegativeBiasGivesNoPositives) {
  const auto w = make_planted_world(16, 4, 1.0, -20.0, 3);
  EXPECT_EQ(label_rate(generate(w, 2000)), 0.0);
}

TEST(Generate, DeterministicAndShardIndependent) {
  const auto w = make_planted_world(32, 4, 3.0, -1.0, 4);
  const auto a = generate(w, 700), b = generate(w, 700);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].z_bar, b[i].z_bar);
    EXPECT_EQ(a[i].label, b[i].label);
  }
  // A shorter run is a prefix of a longer one.
  const auto c = generate(w, 300);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i].z_bar, a[i].z_bar);
  EXPECT_EQ(a[299].logo_id, "synth-000299");
  EXPECT_NE(generate(make_planted_world(32, 4, 3.0, -1.0, 5), 1)[0].z_bar, a[0].z_bar);
}

TEST(Generate, LabelRateMatchesGeneratingModel) {
  for (auto noise : {NoiseKind::Gaussian, NoiseKind::StudentT5}) {
    const auto w = make_planted_world(64, 8, 2.0, -1.0, 6, false, noise);
    const std::size_t M = 8000;
    const auto f = generate(w, M);
    double mean_p = 0, var = 0;
    for (const auto& x : f) {
      const double p = 1.0 / (1.0 + std::exp(-world_logit(w, x.z_bar)));
      mean_p += p;
      var += p * (1 - p);
    }
    mean_p /= M;
    EXPECT_NEAR(label_rate(f), mean_p, 4 * std::sqrt(var) / M);
  }
}

TEST(Generate, StudentNoiseHasUnitVarianceAndHeavierTails) {
  const auto g = make_planted_world(50, 1, 0.0, 0.0, 7);
  auto t = g;
  t.noise = NoiseKind::StudentT5;
  double var = 0, kurt_t = 0, kurt_g = 0;
  std::size_t n = 0;
  for (const auto& x : generate(t, 2000))
    for (double v : x.z_bar) {
      var += v * v;
      kurt_t += v * v * v * v;
      ++n;
    }
  for (const auto& x : generate(g, 2000))
    for (double v : x.z_bar) kurt_g += v * v * v * v;
  var /= n;
  EXPECT_NEAR(var, 1.0, 0.03);
  EXPECT_NEAR(kurt_g / n, 3.0, 0.1);
  EXPECT_GT(kurt_t / n, 4.0);  // t(5) has kurtosis 9 in theory; sample estimate is noisy but well above 3
}

TEST(Generate, StrongSignalHasHighBayesAccuracy) {
  const auto w = make_planted_world(512, 32, 5.2996, -2.0, 8, true);
  EXPECT_GE(bayes_accuracy(w, generate(w, 2000)), 0.9);
}

TEST(Recovery, Examples) {
  const auto w = make_planted_world(512, 32, 1.0, 0.0, 9);
  EXPECT_EQ(recovery_score(w.support, w), 1.0);
  std::vector<std::size_t> off;
  for (std::size_t j = 0; j < 512 && off.size() < 32; ++j)
    if (!std::binary_search(w.support.begin(), w.support.end(), j)) off.push_back(j);
  EXPECT_EQ(recovery_score(off, w), 0.0);
  std::vector<std::size_t> half(w.support.begin(), w.support.begin() + 16);
  EXPECT_EQ(recovery_score(half, w), 0.5);
}

TEST(Recovery, RandomSelectionMatchesHypergeometricMean) {
  const auto w = make_planted_world(512, 32, 1.0, 0.0, 10);
  const int trials = 4000;
  double s = 0;
  for (int t = 0; t < trials; ++t) s += recovery_score(random_placebo(512, 32, 1000 + t).indices, w);
  // Var of hits for hypergeometric(N=512, K=32, n=32), divided by 32^2.
  const double N = 512, K = 32, n = 32;
  const double var_hits = n * (K / N) * (1 - K / N) * (N - n) / (N - 1);
  EXPECT_NEAR(s / trials, 0.0625, 4 * std::sqrt(var_hits / trials) / 32);
}

TEST(Recovery, MonotoneInK) {
  Rng rng(11);
  const auto w = make_planted_world(128, 10, 1.0, 0.0, 11);
  std::vector<double> score(128);
  for (auto& v : score) v = rng.normal();
  double prev = 0;
  for (std::size_t k = 1; k <= 128; ++k) {
    const double r = recovery_score(top_k(score, k), w);
    EXPECT_GE(r, prev);
    EXPECT_LE(r, 1.0);
    prev = r;
  }
  EXPECT_EQ(prev, 1.0);
}

TEST(SimulateAblation, MaskingSupportLeavesBiasOnly) {
  for (bool centered : {false, true}) {
    const auto w = make_planted_world(64, 8, 4.0, -1.5, 12, centered);
    const auto e = simulate_ablation_effect(w, make_mask(w.support, MaskOrigin::Probe), 500);
    EXPECT_NEAR(e.after, 1.0 / (1.0 + std::exp(1.5)), 1e-12);
    auto superset = w.support;
    for (std::size_t j = 0; j < 64 && superset.size() < 20; ++j)
      if (!std::binary_search(w.support.begin(), w.support.end(), j)) superset.push_back(j);
    std::sort(superset.begin(), superset.end());
    EXPECT_NEAR(simulate_ablation_effect(w, make_mask(superset, MaskOrigin::Probe), 500).after, e.after, 1e-12);
  }
}

TEST(SimulateAblation, EmptyMaskChangesNothing) {
  const auto w = make_planted_world(64, 8, 4.0, -1.5, 13, true);
  const auto e = simulate_ablation_effect(w, make_mask({}, MaskOrigin::Probe), 500);
  EXPECT_EQ(e.before, e.after);
  EXPECT_EQ(e.delta(), 0.0);
}

TEST(SimulateAblation, OffSupportMaskChangesNothing) {
  const auto w = make_planted_world(64, 8, 4.0, -1.5, 14, true);
  std::vector<std::size_t> off;
  for (std::size_t j = 0; j < 64; ++j)
    if (!std::binary_search(w.support.begin(), w.support.end(), j)) off.push_back(j);
  EXPECT_EQ(simulate_ablation_effect(w, make_mask(off, MaskOrigin::RandomPlacebo), 300).delta(), 0.0);
}

TEST(CalibratedLabels, MarginalsAndSums) {
  Rng rng(15);
  std::vector<double> p(1000);
  for (auto& v : p) v = rng.uniform();
  double sum_p = 0;
  for (double v : p) sum_p += v;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto y = calibrated_labels(p, s);
    const double sum_y = std::accumulate(y.begin(), y.end(), 0.0);
    EXPECT_LE(std::abs(sum_y - sum_p), 1.0);
  }
  // Marginal of each label is its probability: average over seeds.
  const std::vector<double> q{0.1, 0.5, 0.9, 0.25};
  std::vector<double> freq(4, 0);
  const int draws = 20000;
  for (int s = 0; s < draws; ++s) {
    const auto y = calibrated_labels(q, static_cast<std::uint64_t>(s));
    for (int i = 0; i < 4; ++i) freq[i] += y[i];
  }
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(freq[i] / draws, q[i], 4 * std::sqrt(q[i] * (1 - q[i]) / draws));
  EXPECT_EQ(calibrated_labels(std::vector<double>{0.0, 1.0, 1.0}, 3), (std::vector<int>{0, 1, 1}));
  EXPECT_THROW(calibrated_labels(std::vector<double>{1.5}, 1), ConfigError);
}

TEST(SynthDataset, WritesLembLabelsAndWorld) {
  const auto w = make_planted_world(24, 3, 2.0, -1.0, 16, true);
  const auto f = generate(w, 5);
  const auto dir = std::filesystem::temp_directory_path() / "logohall_synth_test";
  std::filesystem::remove_all(dir);
  write_synth_dataset(dir, w, f);
  for (const auto& x : f) {
    const auto z = load_lemb(dir / (x.logo_id + ".lemb"));
    EXPECT_EQ(z.rows, 1u);
    EXPECT_EQ(z.cols, 24u);
    const auto pooled = pool(z);
    for (std::size_t j = 0; j < 24; ++j) EXPECT_EQ(pooled[j], static_cast<double>(static_cast<float>(x.z_bar[j])));
  }
  std::ifstream labels(dir / "labels.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(labels, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["logo_id"], f[n].logo_id);
    EXPECT_EQ(j["label"], f[n].label);
    ++n;
  }
  EXPECT_EQ(n, 5u);
  std::ifstream wf(dir / "world.json");
  const auto back = world_from_json(nlohmann::json::parse(wf));
  EXPECT_EQ(back.support, w.support);
  EXPECT_EQ(back.w_star, w.w_star);
  EXPECT_EQ(back.activation_offset, w.activation_offset);
  EXPECT_EQ(back.b_star, w.b_star);
  EXPECT_EQ(back.seed, w.seed);
  std::filesystem::remove_all(dir);
}

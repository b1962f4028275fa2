#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logohall/common/error.hpp"
#include "logohall/corpus/record.hpp"
#include "logohall/perturb/perturb.hpp"
#include "logohall/querent/prediction.hpp"

namespace logohall {

// A prediction joined with the manifest record it was made for.
struct ScoredPrediction {
  LogoRecord logo;
  PredictionRecord pred;
};

inline std::vector<ScoredPrediction> join_predictions(const std::vector<LogoRecord>& manifest,
                                                      const std::vector<PredictionRecord>& preds) {
  std::map<std::string, const LogoRecord*> by_id;
  for (const auto& r : manifest) by_id[r.id] = &r;
  std::vector<ScoredPrediction> out;
  out.reserve(preds.size());
  for (const auto& p : preds) {
    auto it = by_id.find(p.logo_id);
    if (it == by_id.end()) throw ConfigError("prediction for unknown logo_id '" + p.logo_id + "'");
    if (it->second->has_text() != p.exact_match.has_value())
      throw InvariantError("prediction '" + p.logo_id + "': exact_match presence disagrees with the manifest");
    out.push_back({*it->second, p});
  }
  return out;
}

// Pure-symbol logos are handled correctly when no text is emitted; logos with
// text when the emitted string matches exactly.
inline bool handled_correctly(const PredictionRecord& p) {
  return p.exact_match ? *p.exact_match : p.y_hat == 0;
}

inline double acc_text(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ConfigError("acc_text: no records");
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (!r.exact_match) throw InvariantError("acc_text: record '" + r.logo_id + "' has no exact_match");
    hits += *r.exact_match ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline double hall_rate(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ConfigError("hall_rate: no records");
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.exact_match) throw InvariantError("hall_rate: record '" + r.logo_id + "' is not pure-symbol");
    hits += r.y_hat == 1 ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

enum class BucketFamily { Category, Color, Shape };

inline const char* to_string(BucketFamily f) {
  switch (f) {
    case BucketFamily::Category: return "category";
    case BucketFamily::Color: return "color";
    case BucketFamily::Shape: return "shape";
  }
  return "?";
}

// Correct: a bucket's correctly handled count over the family total.
// Samples: a bucket's sample count over the family total.
enum class ShareMode { Correct, Samples };

struct BucketRow {
  std::string label;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // absent for empty buckets
  std::optional<double> share;     // absent for the category family
};

namespace detail {

inline BucketRow tally(std::string label, const std::vector<const ScoredPrediction*>& members) {
  BucketRow row;
  row.label = std::move(label);
  row.n = members.size();
  for (const auto* s : members) row.correct += handled_correctly(s->pred) ? 1 : 0;
  if (row.n > 0) row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.n);
  return row;
}

}  // namespace detail

// Category rows are PureSymbol, Hybrid, PureText and the overlapping Hard60
// row, accuracy only. Color and shape rows carry distribution shares that
// sum to 1 over the family.
inline std::vector<BucketRow> bucket_report(const std::vector<ScoredPrediction>& scored, BucketFamily family,
                                            ShareMode mode = ShareMode::Correct) {
  std::vector<BucketRow> rows;
  if (family == BucketFamily::Category) {
    for (auto c : kAllCategories) {
      std::vector<const ScoredPrediction*> m;
      for (const auto& s : scored)
        if (s.logo.category == c) m.push_back(&s);
      rows.push_back(detail::tally(std::string(to_string(c)), m));
    }
    std::vector<const ScoredPrediction*> hard;
    for (const auto& s : scored)
      if (s.logo.hard60) hard.push_back(&s);
    rows.push_back(detail::tally("Hard60", hard));
    return rows;
  }

  std::vector<std::string> labels;
  if (family == BucketFamily::Color) {
    for (auto b : kAllColors) labels.emplace_back(to_string(b));
  } else {
    for (auto b : kAllShapes) labels.emplace_back(to_string(b));
  }
  std::map<std::string, std::vector<const ScoredPrediction*>> groups;
  for (const auto& s : scored) {
    std::optional<std::string> label;
    if (family == BucketFamily::Color && s.logo.color_bucket) label = std::string(to_string(*s.logo.color_bucket));
    if (family == BucketFamily::Shape && s.logo.shape_bucket) label = std::string(to_string(*s.logo.shape_bucket));
    if (!label)
      throw ConfigError(std::string("bucket_report: logo '") + s.logo.id + "' has no " + to_string(family) + " bucket");
    groups[*label].push_back(&s);
  }
  std::size_t total = 0;
  for (const auto& l : labels) {
    rows.push_back(detail::tally(l, groups[l]));
    total += mode == ShareMode::Correct ? rows.back().correct : rows.back().n;
  }
  for (auto& r : rows) {
    const std::size_t part = mode == ShareMode::Correct ? r.correct : r.n;
    r.share = total > 0 ? static_cast<double>(part) / static_cast<double>(total) : 0.0;
  }
  return rows;
}

struct PerturbationRow {
  std::string kind;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t errors = 0;
  std::optional<double> accuracy;
  double error_share = 0.0;
};

struct PerturbationReport {
  std::vector<PerturbationRow> rows;  // the nine kinds in canonical order
  std::optional<double> total;        // unweighted mean of per-kind accuracy
  std::size_t total_errors = 0;
};

inline PerturbationReport perturbation_report(const std::vector<ScoredPrediction>& scored) {
  if (scored.empty()) throw ConfigError("perturbation_report: no records");
  std::map<std::string, std::vector<const ScoredPrediction*>> by_kind;
  for (const auto& s : scored) {
    if (!parse_perturbation(s.pred.perturbation))
      throw ConfigError("perturbation_report: record '" + s.pred.logo_id + "' has perturbation '" +
                        s.pred.perturbation + "'");
    by_kind[s.pred.perturbation].push_back(&s);
  }
  PerturbationReport rep;
  double acc_sum = 0.0;
  int kinds = 0;
  for (auto k : kAllPerturbations) {
    const std::string name(to_string(k));
    const auto& members = by_kind[name];
    PerturbationRow row;
    row.kind = name;
    const auto t = detail::tally(name, members);
    row.n = t.n;
    row.correct = t.correct;
    row.errors = t.n - t.correct;
    row.accuracy = t.accuracy;
    rep.total_errors += row.errors;
    if (row.accuracy) {
      acc_sum += *row.accuracy;
      ++kinds;
    }
    rep.rows.push_back(row);
  }
  for (auto& r : rep.rows)
    r.error_share = rep.total_errors > 0 ? static_cast<double>(r.errors) / static_cast<double>(rep.total_errors) : 0.0;
  if (kinds > 0) rep.total = acc_sum / kinds;
  return rep;
}

// ---- calibration ----

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<double> mean_prob;
  std::optional<double> rate;  // empirical positive (hallucination) rate
};

struct CalibrationReport {
  std::vector<double> edges;
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  double brier = 0.0;
  std::size_t n = 0;
};

namespace detail {

inline void check_calibration_input(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size())
    throw ConfigError("calibration: " + std::to_string(probs.size()) + " probabilities but " +
                      std::to_string(labels.size()) + " labels");
  if (probs.empty()) throw ConfigError("calibration: no samples");
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw ConfigError("calibration: probability outside [0,1]");
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("calibration: label must be 0 or 1");
  }
}

// Samples sorted by (prob, label) so every sum below is independent of the
// caller's record order, bit for bit.
inline std::vector<std::pair<double, int>> sorted_pairs(std::span<const double> probs, std::span<const int> labels) {
  std::vector<std::pair<double, int>> v(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) v[i] = {probs[i], labels[i]};
  std::sort(v.begin(), v.end());
  return v;
}

inline std::size_t bin_index(double p, std::size_t bins) {
  auto i = static_cast<std::size_t>(std::floor(p * static_cast<double>(bins)));
  i = std::min(i, bins - 1);
  const auto edge = [&](std::size_t k) { return static_cast<double>(k) / static_cast<double>(bins); };
  if (i > 0 && p < edge(i)) --i;
  if (i + 1 < bins && p >= edge(i + 1)) ++i;
  return i;
}

}  // namespace detail

inline double brier(std::span<const double> probs, std::span<const int> labels) {
  detail::check_calibration_input(probs, labels);
  double sum = 0.0;
  for (const auto& [p, y] : detail::sorted_pairs(probs, labels)) sum += (p - y) * (p - y);
  return sum / static_cast<double>(probs.size());
}

// Equal-width bins [i/B, (i+1)/B), the last one closed. Empty bins are
// reported with count 0 and contribute nothing to ECE.
inline CalibrationReport reliability_curve(std::span<const double> probs, std::span<const int> labels,
                                           std::size_t bins = 10) {
  detail::check_calibration_input(probs, labels);
  if (bins < 1) throw ConfigError("calibration: bins must be >= 1");
  CalibrationReport rep;
  rep.n = probs.size();
  for (std::size_t i = 0; i <= bins; ++i) rep.edges.push_back(static_cast<double>(i) / static_cast<double>(bins));
  std::vector<double> psum(bins, 0.0);
  std::vector<std::size_t> pos(bins, 0);
  rep.bins.resize(bins);
  for (const auto& [p, y] : detail::sorted_pairs(probs, labels)) {
    const auto b = detail::bin_index(p, bins);
    psum[b] += p;
    pos[b] += static_cast<std::size_t>(y);
    ++rep.bins[b].count;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = rep.bins[b];
    bin.lo = rep.edges[b];
    bin.hi = rep.edges[b + 1];
    if (bin.count == 0) continue;
    const double c = static_cast<double>(bin.count);
    bin.mean_prob = psum[b] / c;
    bin.rate = static_cast<double>(pos[b]) / c;
    rep.ece += (c / static_cast<double>(rep.n)) * std::abs(*bin.mean_prob - *bin.rate);
  }
  rep.brier = brier(probs, labels);
  return rep;
}

inline double ece(std::span<const double> probs, std::span<const int> labels, std::size_t bins = 10) {
  return reliability_curve(probs, labels, bins).ece;
}

// ---- per-model report ----

struct MetricsReport {
  std::string model_id;
  std::string condition = "base";
  std::optional<double> acc_text;
  std::optional<double> hall;
  std::optional<double> no_hall;
  std::size_t n_text = 0;
  std::size_t n_symbol = 0;
  std::vector<std::string> text_ids;    // sorted populations, for comparability checks
  std::vector<std::string> symbol_ids;
  std::vector<BucketRow> categories;
  std::vector<BucketRow> colors;   // pure-symbol logos only
  std::vector<BucketRow> shapes;   // pure-symbol logos only
  std::optional<PerturbationReport> perturbations;
  std::optional<CalibrationReport> calibration;
};

// Builds the Table-1-shaped report. Color and shape rows are computed over
// pure-symbol logos, so their accuracy is the no-hallucination rate.
inline MetricsReport build_metrics_report(const std::string& model_id, const std::vector<ScoredPrediction>& scored,
                                          ShareMode mode = ShareMode::Correct) {
  if (scored.empty()) throw ConfigError("metrics report for '" + model_id + "': no records");
  MetricsReport rep;
  rep.model_id = model_id;
  std::vector<PredictionRecord> text, sym;
  std::vector<ScoredPrediction> sym_scored;
  for (const auto& s : scored) {
    if (s.logo.has_text()) {
      text.push_back(s.pred);
      rep.text_ids.push_back(s.logo.id);
    } else {
      sym.push_back(s.pred);
      sym_scored.push_back(s);
      rep.symbol_ids.push_back(s.logo.id);
    }
  }
  std::sort(rep.text_ids.begin(), rep.text_ids.end());
  std::sort(rep.symbol_ids.begin(), rep.symbol_ids.end());
  rep.n_text = text.size();
  rep.n_symbol = sym.size();
  if (!text.empty()) rep.acc_text = acc_text(text);
  if (!sym.empty()) {
    rep.hall = hall_rate(sym);
    rep.no_hall = 1.0 - *rep.hall;
  }
  rep.categories = bucket_report(scored, BucketFamily::Category, mode);
  auto bucketed = [&](BucketFamily f) {
    std::vector<ScoredPrediction> with;
    for (const auto& s : sym_scored)
      if ((f == BucketFamily::Color ? s.logo.color_bucket.has_value() : s.logo.shape_bucket.has_value())) with.push_back(s);
    return with;
  };
  if (auto c = bucketed(BucketFamily::Color); !c.empty()) rep.colors = bucket_report(c, BucketFamily::Color, mode);
  if (auto s = bucketed(BucketFamily::Shape); !s.empty()) rep.shapes = bucket_report(s, BucketFamily::Shape, mode);
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& p : sym)
    if (p.prob) {
      probs.push_back(*p.prob);
      labels.push_back(p.y_hat);
    }
  if (!probs.empty()) rep.calibration = reliability_curve(probs, labels);
  return rep;
}

}  // namespace logohall

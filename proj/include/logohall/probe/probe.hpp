#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/error.hpp"
#include "logohall/common/rng.hpp"
#include "logohall/probe/embedding.hpp"

namespace logohall {

struct PooledFeature {
  std::string logo_id;
  std::vector<double> z_bar;
  int label = 0;  // 1 = the model hallucinated on this logo
};

inline constexpr double kDefaultProbeC = 0.01;

struct ProbeOptions {
  double C = kDefaultProbeC;
  double tol = 1e-8;
  int max_epochs = 10000;
  bool standardize = true;
};

// Weights live in standardized space: score(x) = b + sum_j w_j (x_j - mean_j) / scale_j.
struct ProbeModel {
  std::vector<double> w;
  double b = 0.0;
  double C = kDefaultProbeC;
  double lambda = 0.0;
  std::size_t M = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> mean;
  std::vector<double> scale;

  std::size_t dim() const { return w.size(); }

  std::size_t nonzeros() const {
    return static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; }));
  }

  double decision(std::span<const double> x) const {
    if (x.size() != w.size()) throw ConfigError("probe: feature dimension mismatch");
    double s = b;
    for (std::size_t j = 0; j < w.size(); ++j)
      if (w[j] != 0.0) s += w[j] * (x[j] - mean[j]) / scale[j];
    return s;
  }

  double predict_proba(std::span<const double> x) const { return 1.0 / (1.0 + std::exp(-decision(x))); }
};

namespace detail {

inline double log1pexp(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }
inline double sigmoid(double m) {
  if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}
inline double soft_threshold(double z, double t) { return z > t ? z - t : (z < -t ? z + t : 0.0); }

}  // namespace detail

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;
};

// Per-dimension z-scoring; constant dimensions get scale 1.
inline Standardizer fit_standardizer(const std::vector<PooledFeature>& f) {
  const std::size_t d = f.front().z_bar.size(), m = f.size();
  Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  for (const auto& x : f)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x.z_bar[j];
  for (auto& v : s.mean) v /= static_cast<double>(m);
  std::vector<double> var(d, 0.0);
  for (const auto& x : f)
    for (std::size_t j = 0; j < d; ++j) var[j] += (x.z_bar[j] - s.mean[j]) * (x.z_bar[j] - s.mean[j]);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(m));
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

inline void check_features(const std::vector<PooledFeature>& f, bool need_both_labels) {
  if (f.size() < 2) throw ConfigError("probe: need at least 2 samples");
  const std::size_t d = f.front().z_bar.size();
  if (d == 0) throw ConfigError("probe: empty feature vectors");
  bool has0 = false, has1 = false;
  for (const auto& x : f) {
    if (x.z_bar.size() != d) throw ConfigError("probe: dimension mismatch at '" + x.logo_id + "'");
    if (x.label != 0 && x.label != 1) throw ConfigError("probe: label must be 0 or 1 at '" + x.logo_id + "'");
    for (double v : x.z_bar)
      if (!std::isfinite(v)) throw InvariantError("probe: non-finite feature at '" + x.logo_id + "'");
    (x.label ? has1 : has0) = true;
  }
  if (need_both_labels && !(has0 && has1)) throw ConfigError("probe: labels are single-class");
}

// Column-major design matrix in standardized space.
inline Eigen::MatrixXd design_matrix(const std::vector<PooledFeature>& f, const Standardizer& s) {
  const std::size_t d = s.mean.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (f[i].z_bar[j] - s.mean[j]) / s.scale[j];
  return X;
}

// Mean logistic loss and its gradient (the smooth part of the objective).
inline double logistic_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b) {
  const Eigen::VectorXd m = (X * w).array() + b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) s += detail::log1pexp(m[i]) - y[i] * m[i];
  return s / static_cast<double>(m.size());
}

inline std::pair<Eigen::VectorXd, double> logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                            const Eigen::VectorXd& w, double b) {
  const Eigen::VectorXd m = (X * w).array() + b;
  Eigen::VectorXd r(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) r[i] = detail::sigmoid(m[i]) - y[i];
  const double inv = 1.0 / static_cast<double>(m.size());
  return {X.transpose() * r * inv, r.sum() * inv};
}

inline double probe_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                              double lambda) {
  return logistic_loss(X, y, w, b) + lambda * w.lpNorm<1>();
}

namespace detail {

// One proximal Newton step on coordinate j (or the intercept when j < 0)
// with a backtracking line search on the composite objective. `loss` is the
// current mean logistic loss and is updated on acceptance.
inline double coordinate_step(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Eigen::VectorXd& margin,
                              double& loss, double& wj, Eigen::Index j, double lambda) {
  const Eigen::Index m = X.rows();
  const double inv = 1.0 / static_cast<double>(m);
  const double* col = j < 0 ? nullptr : X.col(j).data();
  auto x = [&](Eigen::Index i) { return col ? col[i] : 1.0; };
  double g = 0.0, h = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double p = sigmoid(margin[i]);
    g += (p - y[i]) * x(i);
    h += p * (1.0 - p) * x(i) * x(i);
  }
  g *= inv;
  h = h * inv + 1e-12;
  const double pen = j < 0 ? 0.0 : lambda;
  const double target = j < 0 ? wj - g / h : soft_threshold(wj - g / h, pen / h);
  double delta = target - wj;
  if (delta == 0.0) return 0.0;

  const double base = loss + pen * std::abs(wj);
  const double decrease = g * delta + pen * (std::abs(wj + delta) - std::abs(wj));
  double alpha = 1.0;
  for (int t = 0; t < 40; ++t, alpha *= 0.5, delta *= 0.5) {
    double trial_loss = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double mi = margin[i] + delta * x(i);
      trial_loss += log1pexp(mi) - y[i] * mi;
    }
    trial_loss *= inv;
    const double trial = trial_loss + pen * std::abs(wj + delta);
    if (trial <= base && trial - base <= 0.01 * alpha * decrease) {
      wj += delta;
      for (Eigen::Index i = 0; i < m; ++i) margin[i] += delta * x(i);
      loss = trial_loss;
      return delta;
    }
  }
  return 0.0;
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace detail

// L1-regularized logistic regression:
//   min_{w,b} (1/M) sum_i loss(y_i, b + w.x_i) + lambda ||w||_1,  lambda = 1/(C M)
// solved by cyclic proximal Newton coordinate descent from (0, logit(base rate)).
inline ProbeModel fit_probe(const std::vector<PooledFeature>& features, const ProbeOptions& opt = {}) {
  check_features(features, true);
  if (!(opt.C > 0.0)) throw ConfigError("probe: C must be positive");
  const std::size_t d = features.front().z_bar.size();
  Standardizer s = opt.standardize ? fit_standardizer(features)
                                   : Standardizer{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  const Eigen::MatrixXd X = design_matrix(features, s);
  Eigen::VectorXd y(static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) y[static_cast<Eigen::Index>(i)] = features[i].label;

  ProbeModel model;
  model.C = opt.C;
  model.M = features.size();
  model.lambda = 1.0 / (opt.C * static_cast<double>(model.M));
  model.mean = s.mean;
  model.scale = s.scale;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  double b = detail::logit(y.mean());
  Eigen::VectorXd margin = Eigen::VectorXd::Constant(X.rows(), b);
  double loss = logistic_loss(X, y, w, b);

  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    double max_update = std::abs(detail::coordinate_step(X, y, margin, loss, b, -1, model.lambda));
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      max_update = std::max(max_update, std::abs(detail::coordinate_step(X, y, margin, loss, w[j], j, model.lambda)));
    model.iterations = epoch;
    if (max_update < opt.tol) {
      model.converged = true;
      break;
    }
  }
  model.w.assign(w.data(), w.data() + w.size());
  model.b = b;
  return model;
}

// Indices of the k largest |w_j|, ties to the lower index, returned in
// rank order.
inline std::vector<std::size_t> rank_by_magnitude(std::span<const double> w) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(w[a]) > std::abs(w[b]); });
  return idx;
}

// Top-k index set, sorted ascending.
inline std::vector<std::size_t> top_k(std::span<const double> w, std::size_t k) {
  if (k < 1 || k > w.size())
    throw ConfigError("top_k: k=" + std::to_string(k) + " outside [1, " + std::to_string(w.size()) + "]");
  auto ranked = rank_by_magnitude(w);
  ranked.resize(k);
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

// Fallback selection: dimensions with the largest mean |Z_ij| over all tokens.
inline std::vector<std::size_t> select_by_activation(const std::vector<EmbeddingMatrix>& embeddings, std::size_t k) {
  if (embeddings.empty()) throw ConfigError("select_by_activation: no embeddings");
  const std::size_t d = embeddings.front().cols;
  std::vector<double> sum(d, 0.0);
  std::size_t tokens = 0;
  for (const auto& z : embeddings) {
    validate_embedding(z);
    if (z.cols != d) throw ConfigError("select_by_activation: inconsistent d at '" + z.logo_id + "'");
    for (std::size_t i = 0; i < z.rows; ++i)
      for (std::size_t j = 0; j < d; ++j) sum[j] += std::abs(static_cast<double>(z.at(i, j)));
    tokens += z.rows;
  }
  for (auto& v : sum) v /= static_cast<double>(tokens);
  return top_k(sum, k);
}

inline nlohmann::json probe_to_json(const ProbeModel& m) {
  auto weights = nlohmann::json::array();
  for (std::size_t j = 0; j < m.w.size(); ++j)
    if (m.w[j] != 0.0) weights.push_back({j, m.w[j]});
  return {{"d", m.w.size()},     {"b", m.b},       {"C", m.C},
          {"lambda", m.lambda},  {"M", m.M},       {"iterations", m.iterations},
          {"converged", m.converged}, {"nonzeros", m.nonzeros()}, {"weights", weights},
          {"mean", m.mean},      {"scale", m.scale}};
}

inline ProbeModel probe_from_json(const nlohmann::json& j) {
  ProbeModel m;
  try {
    const auto d = j.at("d").get<std::size_t>();
    m.w.assign(d, 0.0);
    for (const auto& pair : j.at("weights")) {
      const auto idx = pair.at(0).get<std::size_t>();
      if (idx >= d) throw ConfigError("probe file: weight index out of range");
      m.w[idx] = pair.at(1).get<double>();
    }
    m.b = j.at("b").get<double>();
    m.C = j.value("C", kDefaultProbeC);
    m.lambda = j.value("lambda", 0.0);
    m.M = j.value("M", std::size_t{0});
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", false);
    m.mean = j.at("mean").get<std::vector<double>>();
    m.scale = j.at("scale").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("probe file: ") + e.what());
  }
  if (m.mean.size() != m.w.size() || m.scale.size() != m.w.size())
    throw ConfigError("probe file: standardization vectors do not match d");
  return m;
}

}  // namespace logohall

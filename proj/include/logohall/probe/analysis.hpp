#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "logohall/common/error.hpp"
#include "logohall/common/rng.hpp"
#include "logohall/probe/ablation.hpp"
#include "logohall/probe/probe.hpp"

namespace logohall {

struct CvOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  ProbeOptions probe;
  double tolerance = 0.01;  // pick the smallest k within this fraction of the best utility
  double flat_utility = 1e-3;
};

struct CvResult {
  std::size_t selected_k = 0;
  std::vector<std::size_t> ks;
  std::vector<double> utility;  // mean held-out utility per k
  bool unstable = false;
};

// Held-out utility of masking a probe's top-k dimensions: the mean increase
// in logistic loss on the held-out fold when those raw coordinates are
// zeroed. It saturates once the masked set covers the predictive dimensions.
inline CvResult cross_validate_k(const std::vector<PooledFeature>& features, const std::vector<std::size_t>& ks,
                                 const CvOptions& opt = {}) {
  check_features(features, true);
  if (ks.empty() || !std::is_sorted(ks.begin(), ks.end()) || std::adjacent_find(ks.begin(), ks.end()) != ks.end())
    throw ConfigError("cross_validate_k: ks must be strictly ascending");
  const std::size_t d = features.front().z_bar.size();
  if (ks.front() < 1 || ks.back() > d) throw ConfigError("cross_validate_k: k outside [1, d]");
  if (opt.folds < 2) throw ConfigError("cross_validate_k: folds must be >= 2");
  if (features.size() < 2 * opt.folds)
    throw ConfigError("cross_validate_k: " + std::to_string(features.size()) + " samples are too few for " +
                      std::to_string(opt.folds) + " folds");

  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(opt.seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);

  CvResult res;
  res.ks = ks;
  res.utility.assign(ks.size(), 0.0);
  for (std::size_t f = 0; f < opt.folds; ++f) {
    std::vector<PooledFeature> train, test;
    for (std::size_t r = 0; r < order.size(); ++r) (r % opt.folds == f ? test : train).push_back(features[order[r]]);
    bool has0 = false, has1 = false;
    for (const auto& x : train) (x.label ? has1 : has0) = true;
    if (!(has0 && has1)) throw ConfigError("cross_validate_k: a training fold is single-class");
    const auto model = fit_probe(train, opt.probe);
    const auto ranked = rank_by_magnitude(model.w);
    auto held_out_loss = [&](const AblationMask* mask) {
      double s = 0.0;
      for (const auto& x : test) {
        const double m = mask ? model.decision(ablate(x.z_bar, *mask)) : model.decision(x.z_bar);
        s += detail::log1pexp(m) - x.label * m;
      }
      return s / static_cast<double>(test.size());
    };
    const double full = held_out_loss(nullptr);
    for (std::size_t t = 0; t < ks.size(); ++t) {
      const auto mask = make_mask({ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(ks[t])}, MaskOrigin::Probe);
      res.utility[t] += (held_out_loss(&mask) - full) / static_cast<double>(opt.folds);
    }
  }
  const double best = *std::max_element(res.utility.begin(), res.utility.end());
  for (std::size_t t = 0; t < ks.size(); ++t)
    if (res.utility[t] >= (1.0 - opt.tolerance) * best) {
      res.selected_k = ks[t];
      break;
    }
  // A curve that is flat because even the smallest k saturates is fine; only
  // a curve with no usable utility anywhere is flagged.
  res.unstable = best <= opt.flat_utility;
  if (res.selected_k == 0) res.selected_k = ks.front();
  return res;
}

struct PcaResult {
  std::vector<std::array<double, 2>> coords;
  std::array<std::vector<double>, 2> components;
  std::vector<double> mean;
  std::array<double, 2> explained_variance{};
  std::array<double, 2> explained_ratio{};
};

// Top-2 principal components of the centered points. The covariance (d x d)
// or Gram (n x n) eigenproblem is solved, whichever is smaller. Each
// component is signed so its largest-magnitude entry is positive.
inline PcaResult pca_2d(const std::vector<std::vector<double>>& points) {
  if (points.size() < 2) throw ConfigError("pca_2d: need at least 2 points");
  const std::size_t n = points.size(), d = points.front().size();
  if (d < 2) throw ConfigError("pca_2d: need d >= 2");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    if (points[i].size() != d) throw ConfigError("pca_2d: dimension mismatch");
    for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
  }
  const Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  const double denom = static_cast<double>(n - 1);

  Eigen::MatrixXd comps(static_cast<Eigen::Index>(d), 2);
  Eigen::Vector2d top;
  double trace = 0.0;
  if (d <= n) {
    const Eigen::MatrixXd cov = (X.transpose() * X) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const auto& ev = es.eigenvalues();
    trace = cov.trace();
    for (int c = 0; c < 2; ++c) {
      comps.col(c) = es.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
      top[c] = ev[static_cast<Eigen::Index>(d) - 1 - c];
    }
  } else {
    const Eigen::MatrixXd gram = (X * X.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const auto& ev = es.eigenvalues();
    trace = gram.trace();
    for (int c = 0; c < 2; ++c) {
      const Eigen::Index k = static_cast<Eigen::Index>(n) - 1 - c;
      top[c] = ev[k];
      Eigen::VectorXd v = X.transpose() * es.eigenvectors().col(k);
      if (c == 1) v -= comps.col(0).dot(v) * comps.col(0);
      const double norm = v.norm();
      comps.col(c) = norm > 0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    }
  }
  if (!(trace > 1e-300) || top[0] <= 1e-12 * trace) throw InvariantError("pca_2d: points have zero variance");

  PcaResult out;
  out.mean.assign(mu.data(), mu.data() + d);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    comps.col(c).cwiseAbs().maxCoeff(&arg);
    if (comps(arg, c) < 0) comps.col(c) *= -1.0;
    out.components[c].assign(comps.col(c).data(), comps.col(c).data() + d);
    out.explained_variance[c] = std::max(0.0, top[c]);
    out.explained_ratio[c] = out.explained_variance[c] / trace;
  }
  const Eigen::MatrixXd proj = X * comps;
  out.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.coords[i] = {proj(static_cast<Eigen::Index>(i), 0), proj(static_cast<Eigen::Index>(i), 1)};
  return out;
}

}  // namespace logohall

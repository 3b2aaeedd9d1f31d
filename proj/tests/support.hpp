#pragma once

#include "spgs/survival_data.hpp"

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace spgs::testing {

/// Small random two-arm dataset; all subjects enrolled at time 0 unless
/// `staggered`. Times are rounded to `tie_grid` to provoke ties.
inline Dataset random_small_dataset(std::mt19937_64& rng, int n, int p, double tie_grid = 0.0,
                                    bool staggered = false) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::vector<SubjectRecord> rows;
  for (int j = 0; j < n; ++j) {
    SubjectRecord r;
    r.id = "s" + std::to_string(j);
    r.arm = j % 2 == 0 ? Arm::control : Arm::treatment;
    r.entry = staggered ? unif(rng) : 0.0;
    for (int k = 0; k < p; ++k) r.covariates.push_back(norm(rng));
    double t = -std::log(unif(rng)) * (r.arm == Arm::control ? 1.0 : 0.7);
    if (tie_grid > 0.0) t = std::max(tie_grid, std::round(t / tie_grid) * tie_grid);
    r.time_on_study = t;
    r.event = unif(rng) < 0.75;
    rows.push_back(std::move(r));
  }
  return Dataset(std::move(rows));
}

/// Breslow log partial likelihood written directly from its definition:
/// sum over events i of eta_i - log sum_{j in stratum(i), X_j >= X_i} exp(eta_j).
/// Only subjects enrolled at the snapshot contribute.
inline double brute_force_log_pl(const Snapshot& snap, const Eigen::VectorXd& beta,
                                 bool stratify_by_arm = true) {
  double ll = 0.0;
  for (std::size_t i = 0; i < snap.size(); ++i) {
    const auto& ri = snap[i];
    if (!ri.enrolled || !ri.event_observed) continue;
    const double eta_i = snap.covariates().row(i).dot(beta);
    double denom = 0.0;
    for (std::size_t j = 0; j < snap.size(); ++j) {
      const auto& rj = snap[j];
      if (!rj.enrolled) continue;
      if (stratify_by_arm && rj.arm != ri.arm) continue;
      if (rj.follow_up >= ri.follow_up) denom += std::exp(snap.covariates().row(j).dot(beta));
    }
    ll += eta_i - std::log(denom);
  }
  return ll;
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd a = x, b = x, c = x, d = x;
    a[k] += h;
    b[k] -= h;
    c[k] += 2 * h;
    d[k] -= 2 * h;
    g[k] = (8 * (f(a) - f(b)) - (f(c) - f(d))) / (12 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h = 1e-4) {
  const Eigen::Index p = x.size();
  Eigen::MatrixXd hess(p, p);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < p; ++b) {
      auto at = [&](double da, double db) {
        Eigen::VectorXd y = x;
        y[a] += da;
        y[b] += db;
        return f(y);
      };
      hess(a, b) = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
    }
  return hess;
}

/// Brute-force maximizer for p in {1, 2}: coarse grid over [-span, span]^p,
/// then zooming grid refinement.
/// `on_edge` is set when the coarse optimum touches the grid boundary.
inline Eigen::VectorXd grid_refine_max(const std::function<double(const Eigen::VectorXd&)>& f,
                                       int p, double span, bool* on_edge) {
  const int m = 81;
  const double step = 2 * span / (m - 1);
  Eigen::VectorXd best(p);
  double best_val = -INFINITY;
  std::vector<int> best_idx(p, 0);
  if (p == 1) {
    for (int a = 0; a < m; ++a) {
      Eigen::VectorXd x(1);
      x << -span + a * step;
      const double v = f(x);
      if (v > best_val) best_val = v, best = x, best_idx = {a};
    }
  } else {
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Eigen::VectorXd x(2);
        x << -span + a * step, -span + b * step;
        const double v = f(x);
        if (v > best_val) best_val = v, best = x, best_idx = {a, b};
      }
  }
  *on_edge = false;
  for (int k : best_idx)
    if (k <= 1 || k >= m - 2) *on_edge = true;

  // Zoom: a (2h+1)^p grid around the incumbent; shrink only when the best
  // point is interior, otherwise recentre at the same width.
  const int h = 10;
  double w = 2 * step;
  Eigen::VectorXd x = best;
  while (w > 1e-10) {
    Eigen::VectorXd cand = x;
    double cand_val = f(x);
    bool interior = true;
    std::vector<int> idx(p, -h);
    while (true) {
      Eigen::VectorXd y(p);
      for (int k = 0; k < p; ++k) y[k] = x[k] + w * idx[k] / h;
      const double v = f(y);
      if (v > cand_val) {
        cand_val = v;
        cand = y;
        interior = true;
        for (int k = 0; k < p; ++k)
          if (std::abs(idx[k]) == h) interior = false;
      }
      int k = 0;
      while (k < p && ++idx[k] > h) idx[k++] = -h;
      if (k == p) break;
    }
    x = cand;
    if (interior) w *= 0.5;
  }
  return x;
}

}  // namespace spgs::testing

#pragma once

#include "elto/common.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace elto::bench {

using Objective = std::function<double(const Vector&)>;

struct Evaluation {
  Vector params;
  double value = std::numeric_limits<double>::infinity();
  std::string error;  ///< nonempty when the objective threw
};

struct SearchResult {
  Vector best_params;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<Evaluation> trace;
  std::vector<double> generation_best;  ///< best-ever value after each generation (CMA-ES)
};

namespace detail {

/// Objective value with failures and non-finite results mapped to +inf.
inline Evaluation evaluate(const Objective& f, const Vector& x) {
  Evaluation e;
  e.params = x;
  try {
    const double v = f(x);
    e.value = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const std::exception& ex) {
    e.error = ex.what();
  }
  return e;
}

}  // namespace detail

/// Cartesian product of per-axis values; the last axis varies fastest.
inline std::vector<Vector> grid_points(const std::vector<std::vector<double>>& axes) {
  if (axes.empty()) throw ArgumentError("grid_points: no axes");
  std::vector<Vector> out{Vector(0)};
  for (const auto& axis : axes) {
    if (axis.empty()) throw ArgumentError("grid_points: empty axis");
    std::vector<Vector> next;
    for (const Vector& prefix : out)
      for (double v : axis) {
        Vector p(prefix.size() + 1);
        p << prefix, v;
        next.push_back(std::move(p));
      }
    out = std::move(next);
  }
  return out;
}

/// Exhaustive evaluation; ties keep the first point seen.
inline SearchResult grid_search(const Objective& f, const std::vector<Vector>& grid) {
  if (grid.empty()) throw ArgumentError("grid_search: empty grid");
  SearchResult r;
  r.best_params = grid.front();
  for (const Vector& x : grid) {
    Evaluation e = detail::evaluate(f, x);
    if (e.value < r.best_value) {
      r.best_value = e.value;
      r.best_params = x;
    }
    r.trace.push_back(std::move(e));
  }
  return r;
}

inline Index cma_population(Index dim) {
  return 4 + static_cast<Index>(std::floor(3.0 * std::log(static_cast<double>(dim))));
}

/// (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates and
/// cumulative step-size adaptation. Runs floor(budget / lambda) generations.
inline SearchResult cma_es(const Objective& f, const Vector& x0, double sigma0, Index budget,
                           std::uint64_t seed) {
  const Index n = x0.size();
  if (n < 1) throw ArgumentError("cma_es: dimension must be >= 1");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw ArgumentError("cma_es: sigma0 must be > 0");
  if (!x0.allFinite()) throw ArgumentError("cma_es: non-finite x0");
  const Index lambda = cma_population(n);
  if (budget < lambda)
    throw ArgumentError("cma_es: budget " + std::to_string(budget) + " is below the population size " +
                        std::to_string(lambda));
  const Index mu = lambda / 2;
  const double nd = static_cast<double>(n);

  Vector weights(mu);
  for (Index i = 0; i < mu; ++i)
    weights(i) = std::log(static_cast<double>(mu) + 0.5) - std::log(static_cast<double>(i + 1));
  weights /= weights.sum();
  const double mueff = 1.0 / weights.squaredNorm();

  const double cc = (4.0 + mueff / nd) / (nd + 4.0 + 2.0 * mueff / nd);
  const double cs = (mueff + 2.0) / (nd + mueff + 5.0);
  const double c1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff);
  const double cmu =
      std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nd + 2.0) * (nd + 2.0) + mueff));
  const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (nd + 1.0)) - 1.0) + cs;
  const double chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector mean = x0;
  double sigma = sigma0;
  Matrix C = Matrix::Identity(n, n);
  Matrix B = Matrix::Identity(n, n);
  Vector D = Vector::Ones(n);
  Vector pc = Vector::Zero(n), ps = Vector::Zero(n);

  SearchResult r;
  r.best_params = x0;
  const Index generations = budget / lambda;
  Matrix z(n, lambda), y(n, lambda);
  std::vector<double> values(static_cast<std::size_t>(lambda));
  std::vector<Index> order(static_cast<std::size_t>(lambda));

  for (Index g = 0; g < generations; ++g) {
    for (Index k = 0; k < lambda; ++k) {
      for (Index i = 0; i < n; ++i) z(i, k) = normal(rng);
      y.col(k) = B * D.asDiagonal() * z.col(k);
      Evaluation e = detail::evaluate(f, mean + sigma * y.col(k));
      values[static_cast<std::size_t>(k)] = e.value;
      if (e.value < r.best_value) {
        r.best_value = e.value;
        r.best_params = e.params;
      }
      r.trace.push_back(std::move(e));
    }
    r.generation_best.push_back(r.best_value);

    for (Index k = 0; k < lambda; ++k) order[static_cast<std::size_t>(k)] = k;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
    });
    Vector y_w = Vector::Zero(n), z_w = Vector::Zero(n);
    for (Index i = 0; i < mu; ++i) {
      y_w += weights(i) * y.col(order[static_cast<std::size_t>(i)]);
      z_w += weights(i) * z.col(order[static_cast<std::size_t>(i)]);
    }
    mean += sigma * y_w;

    // B z_w equals C^{-1/2} y_w
    ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mueff) * (B * z_w);
    const double ps_norm = ps.norm();
    const double gen = static_cast<double>(g + 1);
    const bool hsig = ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gen)) / chi_n <
                      1.4 + 2.0 / (nd + 1.0);
    pc = (1.0 - cc) * pc + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * y_w;

    Matrix rank_mu = Matrix::Zero(n, n);
    for (Index i = 0; i < mu; ++i) {
      const auto& yi = y.col(order[static_cast<std::size_t>(i)]);
      rank_mu += weights(i) * yi * yi.transpose();
    }
    const double delta_h = hsig ? 0.0 : cc * (2.0 - cc);
    C = (1.0 - c1 - cmu) * C + c1 * (pc * pc.transpose() + delta_h * C) + cmu * rank_mu;
    C = symmetrized(C);
    sigma *= std::exp((cs / damps) * (ps_norm / chi_n - 1.0));

    Eigen::SelfAdjointEigenSolver<Matrix> es(C);
    if (es.info() != Eigen::Success || !es.eigenvalues().allFinite()) break;
    B = es.eigenvectors();
    D = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
    // further generations cannot move the mean in floating point
    if (!(sigma * D.maxCoeff() > 1e-14 * std::max(1.0, mean.cwiseAbs().maxCoeff()))) {
      for (Index rest = g + 1; rest < generations; ++rest) r.generation_best.push_back(r.best_value);
      break;
    }
  }
  return r;
}

}  // namespace elto::bench

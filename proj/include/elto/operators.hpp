#pragma once

// Empirical transfer (ELTO) and observable (EOO) operators in finite
// coordinates.
//
// Beliefs are weight vectors over the feature basis of the "post" states
// {phi_x(x_{n+1})}. With G1 the Gram of the "pre" states and G12(i,j) =
// k(pre_i, post_j), propagating the embedding Psi_post m through
// Psi_post (G1 + eps_t I)^{-1} Psi_pre^T gives Psi_post T m with
// T = (G1 + eps_t I)^{-1} G12, so one basis serves before and after the
// prediction step. The observation operator in the same basis is
// O = (G_x + eps_o I)^{-1} G_x with G_x the post-state Gram.

#include "elto/common.hpp"
#include "elto/kernels.hpp"
#include "elto/realization.hpp"

#include <random>

namespace elto {

struct Regularization {
  double eps_t = 1e-3;
  double eps_o = 1e-3;
  double eps_q = 1e-3;

  void validate() const {
    auto ok = [](double e) { return e > 0.0 && std::isfinite(e); };
    if (!ok(eps_t) || !ok(eps_o) || !ok(eps_q))
      throw ArgumentError("regularization constants must be positive and finite");
  }
};

struct EltoFilterModel {
  Matrix X_pre;   ///< r x M
  Matrix X_post;  ///< r x M
  Matrix Y;       ///< q x M, observation aligned with each post state
  KernelSpec kernel_x;
  KernelSpec kernel_y;
  Regularization eps;

  Matrix G1;   ///< pre-state Gram
  Matrix G12;  ///< k(pre_i, post_j)
  Matrix G_x;  ///< post-state Gram
  Matrix G_y;  ///< observation Gram
  Matrix T_coord;
  Matrix O_coord;
  Matrix P;              ///< (G1 + eps_t I)^{-1} G1
  Matrix process_noise;  ///< (1/M)(P - I)(P - I)^T
  Matrix GyO;            ///< G_y O_coord, cached for the innovation step
  Eigen::LDLT<Matrix> gx_solver;  ///< factorisation of G_x + eps_o I

  Index size() const { return X_post.cols(); }
  Index state_dim() const { return X_post.rows(); }
  Index obs_dim() const { return Y.rows(); }
};

/// Scale-relative default 1e-3 tr(G)/N.
inline double default_epsilon(const Matrix& g) {
  return 1e-3 * g.trace() / static_cast<double>(g.rows());
}

namespace detail {

inline void assemble_operators(EltoFilterModel& m) {
  const Index n = m.size();
  const Matrix eye = Matrix::Identity(n, n);
  Eigen::LDLT<Matrix> g1_solver(m.G1 + m.eps.eps_t * eye);
  if (g1_solver.info() != Eigen::Success) throw ConsistencyError("regularised G1 factorisation failed");
  m.T_coord = g1_solver.solve(m.G12);
  m.P = g1_solver.solve(m.G1);
  const Matrix pm = m.P - eye;
  m.process_noise = symmetrized(pm * pm.transpose()) / static_cast<double>(n);
  m.gx_solver.compute(m.G_x + m.eps.eps_o * eye);
  if (m.gx_solver.info() != Eigen::Success)
    throw ConsistencyError("regularised G_x factorisation failed");
  m.O_coord = m.gx_solver.solve(m.G_x);
  m.GyO.noalias() = m.G_y * m.O_coord;
  if (!m.T_coord.allFinite() || !m.O_coord.allFinite())
    throw ConsistencyError("operator coordinates are not finite");
}

}  // namespace detail

/// Fits the operators on explicit transition pairs.
inline EltoFilterModel fit_operators(const Matrix& pre, const Matrix& post, const Matrix& y_post,
                                     const KernelSpec& kernel_x, const KernelSpec& kernel_y,
                                     const Regularization& eps) {
  eps.validate();
  kernel_x.validate();
  kernel_y.validate();
  if (pre.cols() != post.cols() || pre.rows() != post.rows() || y_post.cols() != post.cols())
    throw ArgumentError("fit_operators: pre/post/observation samples are not aligned");
  if (post.cols() < 2) throw ArgumentError("fit_operators: need at least two transition pairs");
  if (!pre.allFinite() || !post.allFinite() || !y_post.allFinite())
    throw ArgumentError("fit_operators: non-finite samples");
  EltoFilterModel m;
  m.X_pre = pre;
  m.X_post = post;
  m.Y = y_post;
  m.kernel_x = kernel_x;
  m.kernel_y = kernel_y;
  m.eps = eps;
  m.G1 = kernel_matrix(kernel_x, pre);
  m.G12 = kernel_matrix(kernel_x, pre, post);
  m.G_x = kernel_matrix(kernel_x, post);
  m.G_y = kernel_matrix(kernel_y, y_post);
  detail::assemble_operators(m);
  return m;
}

/// Single chain: X is r x N states, Y_train q x N observations aligned
/// column-by-column with X (x_n paired with y_{h+n-1}).
inline EltoFilterModel fit_operators(const Matrix& x, const Matrix& y_train,
                                     const KernelSpec& kernel_x, const KernelSpec& kernel_y,
                                     const Regularization& eps) {
  if (x.cols() < 3) throw ArgumentError("fit_operators: need N >= 3 states");
  if (y_train.cols() != x.cols()) throw ArgumentError("fit_operators: X and Y_train not aligned");
  const Index n = x.cols();
  return fit_operators(x.leftCols(n - 1), x.rightCols(n - 1), y_train.rightCols(n - 1), kernel_x,
                       kernel_y, eps);
}

inline EltoFilterModel fit_operators(const TransitionSamples& samples, const KernelSpec& kernel_x,
                                     const KernelSpec& kernel_y, const Regularization& eps) {
  return fit_operators(samples.pre, samples.post, samples.y_post, kernel_x, kernel_y, eps);
}

/// Same samples and Grams, new regularisation. Used by hyperparameter search.
inline EltoFilterModel with_regularization(EltoFilterModel m, const Regularization& eps) {
  eps.validate();
  m.eps = eps;
  detail::assemble_operators(m);
  return m;
}

/// Checks the stored coordinate matrices against their defining equations
/// and re-evaluates a few Gram entries. Throws ConsistencyError on failure.
inline void verify_model(const EltoFilterModel& m, std::uint64_t seed = 7, double tol = 1e-8) {
  const Index n = m.size();
  const Matrix eye = Matrix::Identity(n, n);
  auto rel = [](const Matrix& a, const Matrix& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
  };
  if (rel((m.G1 + m.eps.eps_t * eye) * m.T_coord, m.G12) > tol)
    throw ConsistencyError("T_coord does not satisfy (G1 + eps_t I) T = G12");
  if (rel((m.G_x + m.eps.eps_o * eye) * m.O_coord, m.G_x) > tol)
    throw ConsistencyError("O_coord does not satisfy (G_x + eps_o I) O = G_x");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  for (int k = 0; k < 5; ++k) {
    const Index i = pick(rng), j = pick(rng);
    const double checks[4][2] = {
        {m.G1(i, j), m.kernel_x(m.X_pre.col(i), m.X_pre.col(j))},
        {m.G12(i, j), m.kernel_x(m.X_pre.col(i), m.X_post.col(j))},
        {m.G_x(i, j), m.kernel_x(m.X_post.col(i), m.X_post.col(j))},
        {m.G_y(i, j), m.kernel_y(m.Y.col(i), m.Y.col(j))}};
    for (const auto& c : checks)
      if (std::abs(c[0] - c[1]) > 1e-12 * std::max(1.0, std::abs(c[1])))
        throw ConsistencyError("Gram entry does not match kernel re-evaluation");
  }
}

/// T m: weights over the post-state basis after one transition.
inline Vector propagate_embedding(const EltoFilterModel& model, const Vector& m) {
  if (m.size() != model.size())
    throw ArgumentError("propagate_embedding: expected " + std::to_string(model.size()) +
                        " weights, got " + std::to_string(m.size()));
  return model.T_coord * m;
}

/// O m: weights over the observation features {phi_y(y_i)}.
inline Vector observe_embedding(const EltoFilterModel& model, const Vector& m) {
  if (m.size() != model.size())
    throw ArgumentError("observe_embedding: expected " + std::to_string(model.size()) +
                        " weights, got " + std::to_string(m.size()));
  return model.O_coord * m;
}

/// Expected kernel evaluations <phi_y(y_i), O_e mu> for every training y_i.
inline Vector expected_observation_kernel(const EltoFilterModel& model, const Vector& m) {
  return model.G_y * observe_embedding(model, m);
}

/// State-space preimage of an embedding: X_post m (exact for the Linear kernel).
inline Vector decode_state(const EltoFilterModel& model, const Vector& m) {
  if (m.size() != model.size()) throw ArgumentError("decode_state: weight length mismatch");
  return model.X_post * m;
}

/// Observation-space preimage Y O m.
inline Vector decode_observation(const EltoFilterModel& model, const Vector& m) {
  return model.Y * observe_embedding(model, m);
}

/// Weights over the post-state basis representing phi_x(x) in the
/// regularised least-squares sense: (G_x + eps_o I)^{-1} k_x(post, x).
inline Vector embed_state(const EltoFilterModel& model, const Vector& x) {
  return model.gx_solver.solve(kernel_column(model.kernel_x, model.X_post, x));
}

}  // namespace elto

#pragma once

// Kernel Kalman filtering with the empirical transfer/observable operators.
// Beliefs are (m, S): mean weights and covariance weights over the
// post-state feature basis of an EltoFilterModel.

#include "elto/common.hpp"
#include "elto/operators.hpp"
#include "elto/time_series.hpp"

#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace elto {

enum class BeliefStage { Prior, Posterior };

struct BeliefState {
  Vector m;
  Matrix S;
  BeliefStage stage = BeliefStage::Posterior;
  Index t = 0;
};

struct FilterOutput {
  Index t = 0;
  Vector eta;    ///< predicted observation mean (prior preimage)
  Matrix Sigma;  ///< predicted observation covariance
  Vector prior_state;      ///< X_post m^- (state-space decode of the prior)
  Vector posterior_state;  ///< X_post m^+ (equals prior_state when unobserved)
  double innovation_norm = std::numeric_limits<double>::quiet_NaN();
  double weight_norm = 0.0;  ///< |m^+|
  bool observed = false;
  bool ill_conditioned = false;
};

struct InnovationDiagnostics {
  double innovation_norm = 0.0;
  double rcond = 1.0;
  bool ill_conditioned = false;
};

/// Initial belief from J uniform draws on (0,1)^r mapped through the
/// regularised state embedding: C0 = (G_x + eps_o I)^{-1} K0.
inline BeliefState init_belief(const EltoFilterModel& model, Index J, std::uint64_t seed) {
  if (J < 2) throw ArgumentError("init_belief: J must be >= 2 for a covariance");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Index r = model.state_dim();
  Matrix u(r, J);
  for (Index j = 0; j < J; ++j)
    for (Index i = 0; i < r; ++i) u(i, j) = unif(rng);
  const Matrix c0 = model.gx_solver.solve(kernel_matrix(model.kernel_x, model.X_post, u));
  BeliefState b;
  b.m = c0.rowwise().mean();
  const Matrix centered = c0.colwise() - b.m;
  b.S = symmetrized(centered * centered.transpose()) / static_cast<double>(J - 1);
  b.stage = BeliefStage::Posterior;
  b.t = 0;
  return b;
}

/// Belief from explicit embedding columns (mean and 1/(J-1) covariance).
inline BeliefState belief_from_columns(const Matrix& c0) {
  if (c0.cols() < 2) throw ArgumentError("belief_from_columns: need at least two columns");
  BeliefState b;
  b.m = c0.rowwise().mean();
  const Matrix centered = c0.colwise() - b.m;
  b.S = symmetrized(centered * centered.transpose()) / static_cast<double>(c0.cols() - 1);
  return b;
}

namespace detail {

inline void check_belief(const EltoFilterModel& model, const BeliefState& b) {
  if (b.m.size() != model.size() || b.S.rows() != model.size() || b.S.cols() != model.size())
    throw ArgumentError("belief dimensions do not match the model");
}

inline Matrix predict_covariance(const EltoFilterModel& model, const Matrix& s) {
  Matrix ts = model.T_coord * s;
  Matrix out = ts * model.T_coord.transpose();
  out += model.process_noise;
  return symmetrized(out);
}

/// Gain Q = S O^T (G_y O S O^T + eps_q I)^{-1}, formed by an LU solve of the
/// transposed system; also returns G_y O S for the covariance update.
struct Gain {
  Matrix Q;
  Matrix GyOS;
  double rcond = 1.0;
};

inline Gain kalman_gain(const EltoFilterModel& model, const Matrix& s) {
  const Matrix os = model.O_coord * s;
  Gain g;
  g.GyOS.noalias() = model.G_y * os;
  Matrix a = g.GyOS * model.O_coord.transpose();
  a.diagonal().array() += model.eps.eps_q;
  Eigen::PartialPivLU<Matrix> lu(a.transpose());
  g.rcond = lu.rcond();
  g.Q = lu.solve(os).transpose();
  return g;
}

}  // namespace detail

inline BeliefState predict(const EltoFilterModel& model, const BeliefState& posterior) {
  if (posterior.stage != BeliefStage::Posterior)
    throw StateError("predict requires a posterior belief");
  detail::check_belief(model, posterior);
  BeliefState prior;
  prior.m = model.T_coord * posterior.m;
  prior.S = detail::predict_covariance(model, posterior.S);
  prior.stage = BeliefStage::Prior;
  prior.t = posterior.t + 1;
  return prior;
}

inline BeliefState innovate(const EltoFilterModel& model, const BeliefState& prior,
                            const Vector& y, InnovationDiagnostics* diag = nullptr) {
  if (prior.stage != BeliefStage::Prior) throw StateError("innovate requires a prior belief");
  detail::check_belief(model, prior);
  if (y.size() != model.obs_dim())
    throw ArgumentError("innovate: observation has dimension " + std::to_string(y.size()) +
                        ", model expects " + std::to_string(model.obs_dim()));
  if (!y.allFinite()) throw ArgumentError("innovate: non-finite observation");
  const detail::Gain g = detail::kalman_gain(model, prior.S);
  const Vector innov = kernel_column(model.kernel_y, model.Y, y) - model.GyO * prior.m;
  BeliefState post;
  post.m = prior.m + g.Q * innov;
  post.S = symmetrized(prior.S - g.Q * g.GyOS);
  post.stage = BeliefStage::Posterior;
  post.t = prior.t;
  if (diag) {
    diag->innovation_norm = innov.norm();
    diag->rcond = g.rcond;
    diag->ill_conditioned = !(g.rcond > 1e-14);
  }
  return post;
}

/// eta = Y O m, Sigma = Y O S O^T Y^T.
inline FilterOutput preimage(const EltoFilterModel& model, const BeliefState& belief) {
  detail::check_belief(model, belief);
  const Matrix yo = model.Y * model.O_coord;
  FilterOutput out;
  out.t = belief.t;
  out.eta = yo * belief.m;
  out.Sigma = symmetrized(yo * belief.S * yo.transpose());
  out.prior_state = model.X_post * belief.m;
  out.posterior_state = out.prior_state;
  out.weight_norm = belief.m.norm();
  return out;
}

struct FilterOptions {
  std::optional<Index> init_samples;  ///< J; defaults to the model size
  std::uint64_t seed = 0;
  std::optional<BeliefState> initial;  ///< overrides the random initialisation
};

/// Filters several sequences at once. The covariance recursion does not
/// depend on the observed values, so sequences that share an observation
/// mask share every gain; only the mean updates are per sequence.
/// `mask[t] == false` skips the innovation at step t for all sequences.
inline std::vector<std::vector<FilterOutput>> run_filter_batch(
    const EltoFilterModel& model, std::span<const TimeSeries> set,
    const std::vector<bool>* mask = nullptr, const FilterOptions& opts = {}) {
  std::vector<std::vector<FilterOutput>> outs(set.size());
  Index horizon = 0;
  for (const auto& s : set) {
    if (s.length() > 0 && s.dim() != model.obs_dim())
      throw ArgumentError("run_filter: observation dimension " + std::to_string(s.dim()) +
                          " does not match model dimension " + std::to_string(model.obs_dim()));
    horizon = std::max(horizon, s.length());
  }
  if (horizon == 0) return outs;

  BeliefState init = opts.initial ? *opts.initial
                                  : init_belief(model, opts.init_samples.value_or(model.size()),
                                                opts.seed);
  detail::check_belief(model, init);
  const auto count = static_cast<Index>(set.size());
  Matrix means = init.m.replicate(1, count);
  Matrix s = init.S;
  const Matrix yo = model.Y * model.O_coord;

  for (Index t = 0; t < horizon; ++t) {
    const bool observe = mask == nullptr || (t < static_cast<Index>(mask->size()) && (*mask)[t]);
    const Matrix sigma = symmetrized(yo * s * yo.transpose());
    const Matrix etas = yo * means;
    const Matrix prior_states = model.X_post * means;
    std::optional<detail::Gain> gain;
    if (observe) gain = detail::kalman_gain(model, s);
    for (Index k = 0; k < count; ++k) {
      const TimeSeries& series = set[static_cast<std::size_t>(k)];
      if (t >= series.length()) continue;
      FilterOutput out;
      out.t = t;
      out.eta = etas.col(k);
      out.Sigma = sigma;
      out.prior_state = prior_states.col(k);
      if (gain) {
        const Vector y = series.data.row(t).transpose();
        if (!y.allFinite())
          throw ArgumentError("run_filter: non-finite observation at t=" + std::to_string(t));
        const Vector innov = kernel_column(model.kernel_y, model.Y, y) - model.GyO * means.col(k);
        means.col(k) += gain->Q * innov;
        out.innovation_norm = innov.norm();
        out.observed = true;
        out.ill_conditioned = !(gain->rcond > 1e-14);
      }
      out.posterior_state = model.X_post * means.col(k);
      out.weight_norm = means.col(k).norm();
      if (!means.col(k).allFinite())
        throw ConsistencyError("run_filter: belief became non-finite at t=" + std::to_string(t));
      outs[static_cast<std::size_t>(k)].push_back(std::move(out));
    }
    if (gain) s = symmetrized(s - gain->Q * gain->GyOS);
    if (t + 1 < horizon) {
      means = model.T_coord * means;
      s = detail::predict_covariance(model, s);
    }
  }
  return outs;
}

inline std::vector<FilterOutput> run_filter(const EltoFilterModel& model,
                                            const TimeSeries& observations,
                                            const std::vector<bool>* mask = nullptr,
                                            const FilterOptions& opts = {}) {
  auto outs = run_filter_batch(model, std::span<const TimeSeries>(&observations, 1), mask, opts);
  return std::move(outs.front());
}

}  // namespace elto

#pragma once

// Spectral learning of a latent Markov state from observation windows.
//
// A scalar observable u(y) = sum_{e in S} w_e k_y(y, y_e) is evaluated on
// lagged past/future windows; the whitened past/future cross-covariance is
// decomposed by SVD (kernel CCA), w is trained to maximise the retained
// canonical correlations, and states are read off as x_n = B v_n where v_n
// holds u over the past window.

#include "elto/common.hpp"
#include "elto/kernels.hpp"
#include "elto/time_series.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace elto {

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// Past/future window bookkeeping. For window pair n (0-based here) and lag
/// i in 1..h the past sample is `anchors[n] + past_offsets[i-1]`, with
/// offset h-i-1; future lag j uses offset h+j-2. `anchors[n]` is the 1-based
/// pair number shifted by the sequence's first global sample index, so for
/// a single series pair 1 sees past samples {0..h-1} and future {h..2h-1}.
struct WindowedData {
  Index T = 0;  ///< last global sample index
  Index h = 0;
  Index N = 0;
  std::vector<Index> anchors;
  std::vector<Index> sequence;
  std::vector<Index> past_offsets;
  std::vector<Index> future_offsets;

  /// `lag` is 0-based (lag 0 == i=1, the newest past sample).
  Index past_index(Index n, Index lag) const { return anchors[n] + past_offsets[lag]; }
  Index future_index(Index n, Index lag) const { return anchors[n] + future_offsets[lag]; }
};

namespace detail {

inline void check_window(Index last_index, Index h) {
  // 2 < h < (T+1)/2, written without fractions.
  if (!(h > 2 && 2 * h < last_index + 1))
    throw ArgumentError("window size h=" + std::to_string(h) + " outside admissible interval (2, " +
                        std::to_string((last_index + 1) / 2.0) + ") for T=" +
                        std::to_string(last_index));
}

inline void fill_offsets(WindowedData& win) {
  win.past_offsets.resize(win.h);
  win.future_offsets.resize(win.h);
  for (Index i = 1; i <= win.h; ++i) win.past_offsets[i - 1] = win.h - i - 1;
  for (Index j = 1; j <= win.h; ++j) win.future_offsets[j - 1] = win.h + j - 2;
}

}  // namespace detail

inline WindowedData build_windows(std::span<const TimeSeries> set, Index h) {
  if (set.empty()) throw ArgumentError("build_windows: no series");
  WindowedData win;
  win.h = h;
  detail::fill_offsets(win);
  Index base = 0;
  for (std::size_t s = 0; s < set.size(); ++s) {
    const Index T = set[s].last_index();
    detail::check_window(T, h);
    const Index n_pairs = T + 2 - 2 * h;
    for (Index n = 1; n <= n_pairs; ++n) {
      win.anchors.push_back(base + n);
      win.sequence.push_back(static_cast<Index>(s));
    }
    base += T + 1;
  }
  win.T = base - 1;
  win.N = static_cast<Index>(win.anchors.size());
  return win;
}

inline WindowedData build_windows(const TimeSeries& series, Index h) {
  return build_windows(std::span<const TimeSeries>(&series, 1), h);
}

/// All samples of a set of series as columns, in concatenation order.
inline Matrix stack_samples(std::span<const TimeSeries> set) {
  if (set.empty()) return {};
  Index total = 0;
  for (const auto& s : set) total += s.length();
  Matrix out(set.front().dim(), total);
  Index c = 0;
  for (const auto& s : set) {
    if (s.dim() != out.rows()) throw ArgumentError("series in a set differ in dimension");
    out.middleCols(c, s.length()) = s.data.transpose();
    c += s.length();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Covariances
// ---------------------------------------------------------------------------

struct Covariances {
  Matrix pp;
  Matrix ff;
  Matrix fp;
};

/// N x h matrix of u over the past (future == false) or future windows.
inline Matrix lag_matrix(const Vector& u, const WindowedData& win, bool future) {
  if (u.size() <= win.T)
    throw ConsistencyError("observable values cover " + std::to_string(u.size()) +
                           " samples, windows reference index " + std::to_string(win.T));
  Matrix v(win.N, win.h);
  for (Index n = 0; n < win.N; ++n)
    for (Index l = 0; l < win.h; ++l)
      v(n, l) = u(future ? win.future_index(n, l) : win.past_index(n, l));
  return v;
}

namespace detail {

inline void center_columns(Matrix& v) {
  if (v.rows() == 0) return;
  v.rowwise() -= v.colwise().mean();
}

inline Covariances covariances_from_centered(const Matrix& vpc, const Matrix& vfc) {
  const double inv_n = 1.0 / static_cast<double>(vpc.rows());
  Covariances c;
  c.pp = symmetrized(vpc.transpose() * vpc) * inv_n;
  c.ff = symmetrized(vfc.transpose() * vfc) * inv_n;
  c.fp = vfc.transpose() * vpc * inv_n;
  return c;
}

}  // namespace detail

/// Covariances of u over the windows, given u evaluated on every sample.
inline Covariances empirical_covariances(const Vector& u, const WindowedData& win) {
  Matrix vp = lag_matrix(u, win, false);
  Matrix vf = lag_matrix(u, win, true);
  detail::center_columns(vp);
  detail::center_columns(vf);
  return detail::covariances_from_centered(vp, vf);
}

/// Cross-Gram K(t, e) = k(y_t, y_{S_e}) for every sample t.
inline Matrix reference_gram(const GramMatrix& g, const std::vector<Index>& S) {
  Matrix k(g.rows(), static_cast<Index>(S.size()));
  for (std::size_t e = 0; e < S.size(); ++e) {
    if (S[e] < 0 || S[e] >= g.cols())
      throw ConsistencyError("reference index " + std::to_string(S[e]) + " outside Gram range");
    k.col(static_cast<Index>(e)) = g.values.col(S[e]);
  }
  return k;
}

/// (Cpp)_{i1,i2} = (1/N) w^T G_{S, .+i1} Q_N G_{.+i2, S} w, and likewise for
/// Cff and Cfp.
inline Covariances empirical_covariances(const GramMatrix& g, const Vector& w,
                                         const std::vector<Index>& S, const WindowedData& win) {
  if (static_cast<Index>(S.size()) != w.size())
    throw ArgumentError("empirical_covariances: |w| != |S|");
  if (g.rows() <= win.T) throw ConsistencyError("Gram does not cover the windowed samples");
  return empirical_covariances(Vector(reference_gram(g, S) * w), win);
}

// ---------------------------------------------------------------------------
// Whitening and SVD
// ---------------------------------------------------------------------------

/// Symmetric square root C = R R with R = Q diag(sqrt(l)) Q^T, and its
/// pseudo-inverse. Eigenvalues below rel_tol * max are treated as zero.
struct SymmetricRoot {
  Matrix root;
  Matrix inv_root;
  Matrix eigvecs;
  Vector eigvals;
  std::vector<bool> kept;
};

inline SymmetricRoot symmetric_root(const Matrix& c, double rel_tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(c));
  SymmetricRoot r;
  r.eigvecs = es.eigenvectors();
  r.eigvals = es.eigenvalues();
  const double top = std::max(0.0, r.eigvals.maxCoeff());
  const double cut = rel_tol * top;
  Vector s = Vector::Zero(c.rows());
  Vector s_inv = Vector::Zero(c.rows());
  r.kept.assign(static_cast<std::size_t>(c.rows()), false);
  for (Index k = 0; k < c.rows(); ++k) {
    if (top > 0.0 && r.eigvals(k) > cut) {
      s(k) = std::sqrt(r.eigvals(k));
      s_inv(k) = 1.0 / s(k);
      r.kept[static_cast<std::size_t>(k)] = true;
    }
  }
  r.root = r.eigvecs * s.asDiagonal() * r.eigvecs.transpose();
  r.inv_root = r.eigvecs * s_inv.asDiagonal() * r.eigvecs.transpose();
  return r;
}

struct CcaResult {
  Matrix U;                ///< h x rank left singular vectors
  Matrix V;                ///< h x rank right singular vectors
  Matrix B;                ///< rank x h state-construction matrix
  Vector singular_values;  ///< all h singular values, descending
  Vector correlations;     ///< top `rank` singular values
  Matrix L;                ///< symmetric root of Cff
  Matrix M;                ///< symmetric root of Cpp
  Matrix L_inv;
  Matrix M_inv;
  Index rank = 0;
  bool rank_limited = false;  ///< requested rank exceeded the numerical rank
};

inline CcaResult whiten_and_svd(const Matrix& cpp, const Matrix& cff, const Matrix& cfp, Index r) {
  const Index h = cpp.rows();
  if (cpp.cols() != h || cff.rows() != h || cff.cols() != h || cfp.rows() != h || cfp.cols() != h)
    throw ArgumentError("whiten_and_svd: covariance blocks must be h x h");
  if (r < 1 || r > h) throw ArgumentError("whiten_and_svd: rank must lie in [1, h]");
  const SymmetricRoot lf = symmetric_root(cff);
  const SymmetricRoot mp = symmetric_root(cpp);
  const Matrix w = lf.inv_root * cfp * mp.inv_root;
  Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);

  CcaResult out;
  out.singular_values = svd.singularValues();
  out.L = lf.root;
  out.M = mp.root;
  out.L_inv = lf.inv_root;
  out.M_inv = mp.inv_root;
  Index achievable = 0;
  for (Index k = 0; k < h; ++k)
    if (out.singular_values(k) > 1e-10) ++achievable;
  out.rank = std::min(r, achievable);
  out.rank_limited = out.rank < r;
  out.U = svd.matrixU().leftCols(out.rank);
  out.V = svd.matrixV().leftCols(out.rank);
  out.correlations = out.singular_values.head(out.rank);
  out.B = out.correlations.cwiseSqrt().asDiagonal() * out.V.transpose() * out.M_inv;
  return out;
}

inline CcaResult whiten_and_svd(const Covariances& c, Index r) {
  return whiten_and_svd(c.pp, c.ff, c.fp, r);
}

// ---------------------------------------------------------------------------
// Loss and gradient
// ---------------------------------------------------------------------------

struct LossGradient {
  double loss = 0.0;
  Vector grad;
  bool degenerate = false;
};

namespace detail {

/// Pull a gradient with respect to C^{-1/2} back to C (Daleckii-Krein).
inline Matrix inv_sqrt_pullback(const SymmetricRoot& root, const Matrix& gamma) {
  const Index h = root.eigvals.size();
  Matrix f = Matrix::Zero(h, h);
  for (Index k = 0; k < h; ++k) {
    if (!root.kept[static_cast<std::size_t>(k)]) continue;
    const double sk = std::sqrt(root.eigvals(k));
    for (Index l = 0; l < h; ++l) {
      if (!root.kept[static_cast<std::size_t>(l)]) continue;
      const double sl = std::sqrt(root.eigvals(l));
      // divided difference of t -> t^{-1/2}, exact for k == l as well
      f(k, l) = -1.0 / (sk * sl * (sk + sl));
    }
  }
  const Matrix inner = root.eigvecs.transpose() * gamma * root.eigvecs;
  return root.eigvecs * f.cwiseProduct(inner) * root.eigvecs.transpose();
}

}  // namespace detail

/// Loss -(sum of the top-r canonical correlations) and its gradient in w.
/// `k_ref` is the cross-Gram between every sample and the reference set.
inline LossGradient cca_loss_and_gradient(const Matrix& k_ref, const Vector& w,
                                          const WindowedData& win, Index r) {
  if (k_ref.cols() != w.size()) throw ArgumentError("cca_loss_and_gradient: |w| != |S|");
  if (k_ref.rows() <= win.T) throw ConsistencyError("reference Gram does not cover the windows");
  const Index h = win.h;
  r = std::min(r, h);
  LossGradient out;
  out.grad = Vector::Zero(w.size());

  const Vector u = k_ref * w;
  Matrix vpc = lag_matrix(u, win, false);
  Matrix vfc = lag_matrix(u, win, true);
  detail::center_columns(vpc);
  detail::center_columns(vfc);
  const Covariances c = detail::covariances_from_centered(vpc, vfc);
  const double scale = std::max(c.pp.cwiseAbs().maxCoeff(), c.ff.cwiseAbs().maxCoeff());
  if (!(scale > 1e-300) || !std::isfinite(scale)) {
    out.degenerate = true;
    return out;
  }

  const SymmetricRoot lf = symmetric_root(c.ff);
  const SymmetricRoot mp = symmetric_root(c.pp);
  const Matrix& xf = lf.inv_root;
  const Matrix& xp = mp.inv_root;
  const Matrix wmat = xf * c.fp * xp;
  Eigen::JacobiSVD<Matrix> svd(wmat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.loss = -svd.singularValues().head(r).sum();

  const Matrix g_w = -svd.matrixU().leftCols(r) * svd.matrixV().leftCols(r).transpose();
  const Matrix g_fp = xf * g_w * xp;
  const Matrix g_ff = detail::inv_sqrt_pullback(lf, g_w * xp * c.fp.transpose());
  const Matrix g_pp = detail::inv_sqrt_pullback(mp, c.fp.transpose() * xf * g_w);

  const double inv_n = 1.0 / static_cast<double>(win.N);
  Matrix d_vf = (vfc * (g_ff + g_ff.transpose()) + vpc * g_fp.transpose()) * inv_n;
  Matrix d_vp = (vpc * (g_pp + g_pp.transpose()) + vfc * g_fp) * inv_n;
  detail::center_columns(d_vf);
  detail::center_columns(d_vp);

  Vector du = Vector::Zero(u.size());
  for (Index n = 0; n < win.N; ++n) {
    for (Index l = 0; l < h; ++l) {
      du(win.past_index(n, l)) += d_vp(n, l);
      du(win.future_index(n, l)) += d_vf(n, l);
    }
  }
  out.grad.noalias() = k_ref.transpose() * du;
  return out;
}

inline LossGradient cca_loss_and_gradient(const GramMatrix& g, const Vector& w,
                                          const std::vector<Index>& S, const WindowedData& win,
                                          Index r) {
  if (static_cast<Index>(S.size()) != w.size())
    throw ArgumentError("cca_loss_and_gradient: |w| != |S|");
  return cca_loss_and_gradient(reference_gram(g, S), w, win, r);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class ReferencePolicy { All, Last, Stride, Random };

struct ReferenceSpec {
  ReferencePolicy policy = ReferencePolicy::All;
  Index count = 0;  ///< ignored for All
};

inline std::vector<Index> select_reference(const ReferenceSpec& spec, Index total,
                                           std::uint64_t seed) {
  std::vector<Index> s;
  const Index k = spec.policy == ReferencePolicy::All ? total : std::min(spec.count, total);
  if (k <= 0) throw ArgumentError("reference set must be nonempty");
  switch (spec.policy) {
    case ReferencePolicy::All:
      s.resize(static_cast<std::size_t>(total));
      std::iota(s.begin(), s.end(), Index{0});
      break;
    case ReferencePolicy::Last:
      for (Index i = total - k; i < total; ++i) s.push_back(i);
      break;
    case ReferencePolicy::Stride:
      for (Index i = 0; i < k; ++i)
        s.push_back(k == 1 ? 0 : static_cast<Index>(std::llround(
                                     static_cast<double>(i) * static_cast<double>(total - 1) /
                                     static_cast<double>(k - 1))));
      break;
    case ReferencePolicy::Random: {
      std::vector<Index> all(static_cast<std::size_t>(total));
      std::iota(all.begin(), all.end(), Index{0});
      std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
      std::shuffle(all.begin(), all.end(), rng);
      s.assign(all.begin(), all.begin() + k);
      std::sort(s.begin(), s.end());
      break;
    }
  }
  return s;
}

struct RealizationConfig {
  KernelSpec kernel_y = KernelSpec::rbf(1.0);
  Index h = 5;
  /// Retained rank; when empty the rank is the number of correlations above
  /// rank_threshold * (largest) and the loss sums all h correlations.
  std::optional<Index> rank;
  double rank_threshold = 0.05;
  Index epochs = 200;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  ReferenceSpec reference;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<Vector> w_init;
  /// Ridge, relative to the mean auto-covariance eigenvalue, added to both
  /// auto-covariances when building B. Bounds the gain of near-null
  /// directions, which otherwise dominate the states of noise-free data whose
  /// correlations are all close to 1. Training is unaffected.
  double whitening_ridge = 0.0;
};

struct RealizationModel {
  KernelSpec kernel_y;
  Vector w;
  std::vector<Index> S;
  Matrix reference;  ///< q x |S| reference observations y_e, e in S
  Matrix B;          ///< r x h
  Vector correlations;
  Vector singular_values;  ///< all h, for diagnostics
  Index h = 0;
  Index r = 0;
  std::string train_series_id;
  std::vector<double> loss_trace;
  bool aborted_nonfinite = false;
  bool rank_limited = false;
  std::string diagnostic;
};

/// Unit-norm standard-normal draw used for w before training.
inline Vector initial_weights(Index size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(size);
  for (Index i = 0; i < size; ++i) w(i) = normal(rng);
  const double n = w.norm();
  return n > 0 ? Vector(w / n) : w;
}

inline RealizationModel optimize_w(std::span<const TimeSeries> set, const RealizationConfig& cfg) {
  if (cfg.epochs < 0) throw ArgumentError("optimize_w: epochs must be >= 0");
  cfg.kernel_y.validate();
  for (const auto& s : set) s.validate();
  const WindowedData win = build_windows(set, cfg.h);
  const Matrix samples = stack_samples(set);
  const Index total = samples.cols();

  RealizationModel model;
  model.kernel_y = cfg.kernel_y;
  model.h = cfg.h;
  model.S = select_reference(cfg.reference, total, cfg.seed);
  model.reference.resize(samples.rows(), static_cast<Index>(model.S.size()));
  for (std::size_t e = 0; e < model.S.size(); ++e)
    model.reference.col(static_cast<Index>(e)) = samples.col(model.S[e]);
  model.train_series_id = set.front().system_tag + ":seed=" + std::to_string(set.front().seed) +
                          ":n=" + std::to_string(set.size());

  const Matrix k_ref = kernel_matrix(cfg.kernel_y, samples, model.reference);
  Vector w = cfg.w_init ? *cfg.w_init : initial_weights(k_ref.cols(), cfg.seed);
  if (w.size() != k_ref.cols()) throw ArgumentError("optimize_w: w_init has wrong length");
  const Index loss_rank = cfg.rank ? std::min(*cfg.rank, cfg.h) : cfg.h;
  if (loss_rank < 1) throw ArgumentError("optimize_w: rank must be >= 1");

  Vector m1 = Vector::Zero(w.size());
  Vector m2 = Vector::Zero(w.size());
  Vector last_finite = w;
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LossGradient lg = cca_loss_and_gradient(k_ref, w, win, loss_rank);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      model.aborted_nonfinite = true;
      model.diagnostic = "non-finite loss at epoch " + std::to_string(epoch);
      w = last_finite;
      break;
    }
    model.loss_trace.push_back(lg.loss);
    last_finite = w;
    if (lg.degenerate) continue;
    const double t = static_cast<double>(epoch + 1);
    m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * lg.grad;
    m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * lg.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    w.array() -= cfg.learning_rate * (m1.array() / c1) /
                 ((m2.array() / c2).sqrt() + cfg.adam_eps);
  }

  Covariances c = empirical_covariances(Vector(k_ref * w), win);
  if (cfg.whitening_ridge < 0) throw ArgumentError("optimize_w: whitening_ridge must be >= 0");
  if (cfg.whitening_ridge > 0) {
    const double h = static_cast<double>(cfg.h);
    c.pp.diagonal().array() += cfg.whitening_ridge * c.pp.trace() / h;
    c.ff.diagonal().array() += cfg.whitening_ridge * c.ff.trace() / h;
  }
  const CcaResult full = whiten_and_svd(c, cfg.h);
  model.loss_trace.push_back(-full.singular_values.head(loss_rank).sum());
  Index r = 0;
  if (cfg.rank) {
    r = *cfg.rank;
  } else {
    const double top = full.singular_values(0);
    for (Index k = 0; k < cfg.h; ++k)
      if (full.singular_values(k) > cfg.rank_threshold * top) ++r;
    r = std::max<Index>(r, 1);
  }
  const CcaResult cca = whiten_and_svd(c, r);
  model.w = w;
  model.B = cca.B;
  model.r = cca.rank;
  model.rank_limited = cca.rank_limited;
  model.correlations = cca.correlations;
  model.singular_values = full.singular_values;
  if (model.r == 0) model.diagnostic += (model.diagnostic.empty() ? "" : "; ") + std::string("rank 0");
  return model;
}

inline RealizationModel optimize_w(const TimeSeries& series, const RealizationConfig& cfg) {
  return optimize_w(std::span<const TimeSeries>(&series, 1), cfg);
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

enum class StateHorizon {
  Paired,   ///< n = 1..T+2-2h, the pairs used for covariance estimation
  Observed  ///< n = 1..T-h+1, every state with an aligned observation y_{h+n-1}
};

/// Observable u(y_t) for every sample of `series`.
inline Vector observable_values(const RealizationModel& model, const TimeSeries& series) {
  if (series.dim() != model.reference.rows())
    throw ArgumentError("series dimension does not match the model");
  return kernel_matrix(model.kernel_y, series.samples(), model.reference) * model.w;
}

inline Index state_count(Index last_index, Index h, StateHorizon horizon) {
  return horizon == StateHorizon::Paired ? last_index + 2 - 2 * h : last_index - h + 1;
}

/// Column n-1 is x_n = B v_n with v_n[i] = u(y_{n+h-1-i}), i = 1..h.
inline Matrix extract_states(const RealizationModel& model, const TimeSeries& series,
                             StateHorizon horizon = StateHorizon::Paired) {
  const Index h = model.h;
  if (series.length() < 2 * h - 1)
    throw ArgumentError("extract_states: series of length " + std::to_string(series.length()) +
                        " is shorter than 2h-1 = " + std::to_string(2 * h - 1));
  const Index count = std::max<Index>(0, state_count(series.last_index(), h, horizon));
  const Vector u = observable_values(model, series);
  Matrix v(h, count);
  for (Index n = 1; n <= count; ++n)
    for (Index i = 1; i <= h; ++i) v(i - 1, n - 1) = u(n + h - 1 - i);
  return model.B * v;
}

/// Observation aligned with state x_n: y_{h+n-1}; columns match extract_states.
inline Matrix aligned_observations(const TimeSeries& series, Index h, Index count) {
  Matrix y(series.dim(), count);
  for (Index n = 1; n <= count; ++n) y.col(n - 1) = series.data.row(h + n - 1).transpose();
  return y;
}

/// Consecutive state pairs (x_n, x_{n+1}) with the observation aligned to
/// x_{n+1}, pooled over a set of sequences. Pairs never straddle sequences.
struct TransitionSamples {
  Matrix pre;
  Matrix post;
  Matrix y_post;
};

/// Pools transition pairs; when `max_pairs` > 0 and smaller than the pool, a
/// seeded uniform subset is kept in pool order. A fixed stride would alias with
/// the per-sequence pair count and sample only a few time positions.
inline TransitionSamples transition_samples(const RealizationModel& model,
                                            std::span<const TimeSeries> set,
                                            Index max_pairs = 0, std::uint64_t seed = 0) {
  std::vector<Matrix> xs, ys;
  Index total = 0;
  for (const auto& s : set) {
    Matrix x = extract_states(model, s, StateHorizon::Observed);
    if (x.cols() < 2) continue;
    ys.push_back(aligned_observations(s, model.h, x.cols()));
    total += x.cols() - 1;
    xs.push_back(std::move(x));
  }
  if (total == 0) throw ArgumentError("transition_samples: no sequence yields a state pair");
  std::vector<Index> keep;
  if (max_pairs > 0 && max_pairs < total) {
    std::vector<Index> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), Index{0});
    std::mt19937_64 rng(seed ^ 0x7a11e5ULL);
    std::shuffle(all.begin(), all.end(), rng);
    keep.assign(all.begin(), all.begin() + max_pairs);
    std::sort(keep.begin(), keep.end());
  } else {
    keep.resize(static_cast<std::size_t>(total));
    std::iota(keep.begin(), keep.end(), Index{0});
  }
  const Index r = xs.front().rows();
  const Index q = ys.front().rows();
  TransitionSamples out{Matrix(r, static_cast<Index>(keep.size())),
                        Matrix(r, static_cast<Index>(keep.size())),
                        Matrix(q, static_cast<Index>(keep.size()))};
  std::size_t next = 0;
  Index global = 0;
  for (std::size_t s = 0; s < xs.size() && next < keep.size(); ++s) {
    const Index pairs = xs[s].cols() - 1;
    while (next < keep.size() && keep[next] < global + pairs) {
      const Index n = keep[next] - global;
      const auto c = static_cast<Index>(next);
      out.pre.col(c) = xs[s].col(n);
      out.post.col(c) = xs[s].col(n + 1);
      out.y_post.col(c) = ys[s].col(n + 1);
      ++next;
    }
    global += pairs;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear latent transition
// ---------------------------------------------------------------------------

struct LinearTransition {
  Matrix A;
  double residual = 0.0;  ///< |X2 - A X1|_F / |X2|_F
  bool rank_deficient = false;
};

/// Least-squares A minimising |X_{2:N} - A X_{1:N-1}|_F (minimum norm when
/// X_{1:N-1} is rank deficient).
inline LinearTransition linear_state_transition(const Matrix& x) {
  const Index r = x.rows();
  const Index n = x.cols();
  if (n < r + 1) throw ArgumentError("linear_state_transition: need N >= r + 1 samples");
  const Matrix x1 = x.leftCols(n - 1);
  const Matrix x2 = x.rightCols(n - 1);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x1.transpose());
  cod.setThreshold(1e-12);
  LinearTransition out;
  out.A = cod.solve(x2.transpose()).transpose();
  out.rank_deficient = cod.rank() < r;
  const double denom = x2.norm();
  out.residual = denom > 0 ? (x2 - out.A * x1).norm() / denom : 0.0;
  return out;
}

}  // namespace elto

#pragma once

// Koopman mode decomposition on learned states, and the DMD baselines
// (exact, Hankel, extended, subspace) it is compared against.

#include "elto/common.hpp"
#include "elto/kernels.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

namespace elto {

enum class ModeMethod { ELTO, DMD, HankelDMD, EDMD, SubspaceDMD };

inline std::string_view to_string(ModeMethod m) {
  switch (m) {
    case ModeMethod::ELTO: return "ELTO";
    case ModeMethod::DMD: return "DMD";
    case ModeMethod::HankelDMD: return "HankelDMD";
    case ModeMethod::EDMD: return "EDMD";
    case ModeMethod::SubspaceDMD: return "SubspaceDMD";
  }
  return "?";
}

struct ModeDecomposition {
  std::vector<Complex> eigvals_discrete;
  std::vector<Complex> eigvals_continuous;
  CMatrix eigfun_coeffs;  ///< one column per eigenvalue (method-specific basis)
  CMatrix eigfun_values;  ///< T x k eigenfunction values on the fitted samples
  CMatrix modes;          ///< q x k
  double dt = 1.0;
  ModeMethod method = ModeMethod::DMD;
  Index rank = 0;
  bool defective = false;
  bool rank_deficient = false;
  bool ridge_applied = false;
};

/// Principal-branch log(lambda)/dt; -inf for lambda == 0.
inline Complex to_continuous(Complex lambda, double dt) {
  if (std::abs(lambda) == 0.0) return {-std::numeric_limits<double>::infinity(), 0.0};
  return std::log(lambda) / dt;
}

namespace detail {

inline void eig(const Matrix& a, CVector& vals, CMatrix& vecs) {
  Eigen::EigenSolver<Matrix> es(a, true);
  vals = es.eigenvalues();
  vecs = es.eigenvectors();
}

inline void eig(const CMatrix& a, CVector& vals, CMatrix& vecs) {
  Eigen::ComplexEigenSolver<CMatrix> es(a, true);
  vals = es.eigenvalues();
  vecs = es.eigenvectors();
}

/// Indices ordering eigenvalues by descending magnitude; eigenvalues whose
/// magnitudes agree to rounding are ordered by descending imaginary part.
inline std::vector<Index> spectral_order(const CVector& vals) {
  std::vector<Index> idx(static_cast<std::size_t>(vals.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Index a, Index b) { return std::abs(vals(a)) > std::abs(vals(b)); });
  std::size_t start = 0;
  while (start < idx.size()) {
    std::size_t end = start + 1;
    const double head = std::abs(vals(idx[start]));
    while (end < idx.size() && head - std::abs(vals(idx[end])) <= 1e-10 * std::max(1.0, head))
      ++end;
    std::stable_sort(idx.begin() + static_cast<std::ptrdiff_t>(start),
                     idx.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](Index a, Index b) { return vals(a).imag() > vals(b).imag(); });
    start = end;
  }
  return idx;
}

inline double column_condition(const CMatrix& v) {
  if (v.cols() == 0) return 1.0;
  CMatrix n = v;
  for (Index j = 0; j < n.cols(); ++j) {
    const double c = n.col(j).norm();
    if (c > 0) n.col(j) /= c;
  }
  Eigen::JacobiSVD<CMatrix> svd(n);
  const auto& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  return lo > 0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

inline void fill_eigvals(ModeDecomposition& d, const CVector& vals, const std::vector<Index>& order,
                         Index k) {
  d.eigvals_discrete.clear();
  d.eigvals_continuous.clear();
  for (Index j = 0; j < k; ++j) {
    const Complex l = vals(order[static_cast<std::size_t>(j)]);
    d.eigvals_discrete.push_back(l);
    d.eigvals_continuous.push_back(to_continuous(l, d.dt));
  }
}

template <class M>
CMatrix to_complex(const M& m) {
  return m.template cast<Complex>();
}

/// Least-squares modes V (q x k) with Y^T ~= Phi V^T.
inline CMatrix fit_modes(const CMatrix& phi, const CMatrix& y_rows) {
  Eigen::CompleteOrthogonalDecomposition<CMatrix> cod(phi);
  return cod.solve(y_rows).transpose();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel Koopman operator on learned states
// ---------------------------------------------------------------------------

struct KoopmanEstimate {
  Matrix K;     ///< (G1 + eps I)^{-1} G12
  Matrix pre;   ///< r x M states x_n
  Matrix post;  ///< r x M states x_{n+1}
  KernelSpec kernel;
  double eps = 0.0;
  Eigen::LDLT<Matrix> g1_solver;
};

inline KoopmanEstimate kernel_koopman(const Matrix& pre, const Matrix& post,
                                      const KernelSpec& kernel, double eps) {
  kernel.validate();
  if (!(eps > 0.0)) throw ArgumentError("kernel_koopman: eps must be positive");
  if (pre.cols() != post.cols() || pre.rows() != post.rows())
    throw ArgumentError("kernel_koopman: pre/post samples not aligned");
  if (pre.cols() < 2) throw ArgumentError("kernel_koopman: need at least two pairs");
  if (!pre.allFinite() || !post.allFinite())
    throw ArgumentError("kernel_koopman: non-finite states");
  KoopmanEstimate k;
  k.pre = pre;
  k.post = post;
  k.kernel = kernel;
  k.eps = eps;
  Matrix g1 = kernel_matrix(kernel, pre);
  g1.diagonal().array() += eps;
  k.g1_solver.compute(g1);
  k.K = k.g1_solver.solve(kernel_matrix(kernel, pre, post));
  return k;
}

/// Single trajectory X (r x N): pairs (x_n, x_{n+1}).
inline KoopmanEstimate kernel_koopman(const Matrix& x, const KernelSpec& kernel, double eps) {
  if (x.cols() < 3) throw ArgumentError("kernel_koopman: need N >= 3 states");
  return kernel_koopman(x.leftCols(x.cols() - 1), x.rightCols(x.cols() - 1), kernel, eps);
}

/// Eigen-decomposition of the Koopman matrix. Eigenfunctions are
/// phi_j(x) = sum_i c_ij k(pre_i, x) with c_j = (G1 + eps I)^{-1} xi_j and xi_j
/// a left eigenvector of K. Modes are least-squares fits of Y onto the
/// eigenfunction values at X (Y column t pairs with X column t).
inline ModeDecomposition decompose(const KoopmanEstimate& koop, const Matrix& x, const Matrix& y,
                                   double dt, Index n_modes) {
  if (x.cols() != y.cols()) throw ArgumentError("decompose: X and Y not aligned");
  if (n_modes < 1 || n_modes > koop.K.rows())
    throw ArgumentError("decompose: n_modes must lie in [1, " + std::to_string(koop.K.rows()) + "]");
  CVector vals;
  CMatrix left;
  detail::eig(Matrix(koop.K.transpose()), vals, left);
  const auto order = detail::spectral_order(vals);

  ModeDecomposition d;
  d.dt = dt;
  d.method = ModeMethod::ELTO;
  d.rank = n_modes;
  detail::fill_eigvals(d, vals, order, n_modes);
  CMatrix xi(left.rows(), n_modes);
  for (Index j = 0; j < n_modes; ++j) xi.col(j) = left.col(order[static_cast<std::size_t>(j)]);
  d.defective = detail::column_condition(xi) > 1e12;
  d.eigfun_coeffs.resize(xi.rows(), n_modes);
  for (Index j = 0; j < n_modes; ++j) {
    const Vector re = koop.g1_solver.solve(Vector(xi.col(j).real()));
    const Vector im = koop.g1_solver.solve(Vector(xi.col(j).imag()));
    d.eigfun_coeffs.col(j) = re.cast<Complex>() + Complex(0, 1) * im.cast<Complex>();
  }
  if (x.cols() > 0) {
    const Matrix kx = kernel_matrix(koop.kernel, koop.pre, x);
    d.eigfun_values = kx.transpose().cast<Complex>() * d.eigfun_coeffs;
    d.modes = detail::fit_modes(d.eigfun_values, y.transpose().cast<Complex>());
  }
  return d;
}

/// Eigenvalues only, sorted; avoids the eigenvector work of decompose().
inline std::vector<Complex> koopman_eigenvalues(const KoopmanEstimate& koop) {
  Eigen::EigenSolver<Matrix> es(koop.K, false);
  const CVector vals = es.eigenvalues();
  std::vector<Complex> out;
  for (Index i : detail::spectral_order(vals)) out.push_back(vals(i));
  return out;
}

/// Spectrum of (G1 + eps I)^{-1} G12 without forming the Koopman estimate.
/// For the Linear kernel with r < M the nonzero eigenvalues are those of the
/// r x r matrix X2 X1^T (X1 X1^T + eps I)^{-1}; the other M - r are zero.
inline std::vector<Complex> kernel_koopman_spectrum(const Matrix& pre, const Matrix& post,
                                                    const KernelSpec& kernel, double eps) {
  if (kernel.kind != KernelKind::Linear || pre.rows() >= pre.cols())
    return koopman_eigenvalues(kernel_koopman(pre, post, kernel, eps));
  if (!(eps > 0.0)) throw ArgumentError("kernel_koopman: eps must be positive");
  if (pre.cols() != post.cols() || pre.rows() != post.rows())
    throw ArgumentError("kernel_koopman: pre/post samples not aligned");
  if (!pre.allFinite() || !post.allFinite())
    throw ArgumentError("kernel_koopman: non-finite states");
  const Index r = pre.rows();
  Matrix c = pre * pre.transpose();
  c.diagonal().array() += eps;
  const Matrix a = c.ldlt().solve(pre * post.transpose()).transpose();
  Eigen::EigenSolver<Matrix> es(a, false);
  CVector vals = CVector::Zero(pre.cols());
  vals.head(r) = es.eigenvalues();
  std::vector<Complex> out;
  for (Index i : detail::spectral_order(vals)) out.push_back(vals(i));
  return out;
}

/// Eigenvalue-only decomposition (both domains filled, no eigenfunctions).
inline ModeDecomposition spectrum_only(const std::vector<Complex>& vals, double dt,
                                       ModeMethod method) {
  ModeDecomposition d;
  d.dt = dt;
  d.method = method;
  d.rank = static_cast<Index>(vals.size());
  d.eigvals_discrete = vals;
  for (const Complex& z : vals) d.eigvals_continuous.push_back(to_continuous(z, dt));
  return d;
}

/// y_t = sum_j lambda_j^t phi_j(x_0) v_j for t = 0..steps-1, using the
/// eigenfunction values stored for the first fitted sample.
inline Matrix reconstruct(const ModeDecomposition& d, Index steps) {
  if (d.eigfun_values.rows() == 0) throw ArgumentError("reconstruct: no eigenfunction values");
  const Index k = static_cast<Index>(d.eigvals_discrete.size());
  Matrix out(d.modes.rows(), steps);
  for (Index t = 0; t < steps; ++t) {
    CVector acc = CVector::Zero(d.modes.rows());
    for (Index j = 0; j < k; ++j)
      acc += std::pow(d.eigvals_discrete[static_cast<std::size_t>(j)], static_cast<double>(t)) *
             d.eigfun_values(0, j) * d.modes.col(j);
    out.col(t) = acc.real();
  }
  return out;
}

// ---------------------------------------------------------------------------
// DMD baselines. Snapshot matrices hold one sample per column.
// ---------------------------------------------------------------------------

namespace detail {

template <class Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
Index numerical_rank(const Eigen::Matrix<double, Eigen::Dynamic, 1>& s, double rel_tol) {
  if (s.size() == 0 || !(s(0) > 0)) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

}  // namespace detail

/// Exact DMD on snapshot pairs (Y1[:,t] -> Y2[:,t]). The SVD of Y1 is
/// truncated at `rank` (default: numerical rank, relative tolerance 1e-10).
template <class Scalar>
ModeDecomposition dmd_exact(const detail::MatrixT<Scalar>& y1, const detail::MatrixT<Scalar>& y2,
                            double dt = 1.0, std::optional<Index> rank = std::nullopt) {
  if (y1.rows() != y2.rows() || y1.cols() != y2.cols())
    throw ArgumentError("dmd_exact: snapshot matrices differ in shape");
  if (y1.cols() < 2) throw ArgumentError("dmd_exact: need at least two snapshot pairs");
  Eigen::BDCSVD<detail::MatrixT<Scalar>> svd(y1, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index num = detail::numerical_rank<Scalar>(svd.singularValues(), 1e-10);
  if (num == 0) throw ArgumentError("dmd_exact: snapshot matrix has rank 0");
  const Index r = rank ? std::min(*rank, num) : num;
  const auto u = svd.matrixU().leftCols(r);
  const auto v = svd.matrixV().leftCols(r);
  const Eigen::Matrix<double, Eigen::Dynamic, 1> s_inv =
      svd.singularValues().head(r).cwiseInverse();
  const detail::MatrixT<Scalar> y2vs = y2 * v * s_inv.template cast<Scalar>().asDiagonal();
  const detail::MatrixT<Scalar> a_tilde = u.adjoint() * y2vs;
  CVector vals;
  CMatrix vecs;
  detail::eig(a_tilde, vals, vecs);
  const auto order = detail::spectral_order(vals);
  ModeDecomposition d;
  d.dt = dt;
  d.method = ModeMethod::DMD;
  d.rank = r;
  d.rank_deficient = num < std::min(y1.rows(), y1.cols());
  detail::fill_eigvals(d, vals, order, r);
  CMatrix w(r, r);
  for (Index j = 0; j < r; ++j) w.col(j) = vecs.col(order[static_cast<std::size_t>(j)]);
  d.eigfun_coeffs = w;
  d.modes = detail::to_complex(y2vs) * w;
  d.defective = detail::column_condition(w) > 1e12;
  return d;
}

/// Convenience: consecutive columns of a single snapshot sequence.
template <class Scalar>
ModeDecomposition dmd_exact(const detail::MatrixT<Scalar>& y, double dt = 1.0,
                            std::optional<Index> rank = std::nullopt) {
  if (y.cols() < 3) throw ArgumentError("dmd_exact: need at least two snapshot pairs");
  return dmd_exact<Scalar>(y.leftCols(y.cols() - 1), y.rightCols(y.cols() - 1), dt, rank);
}

/// Delay-stacked snapshots: column t = [y_t; y_{t+1}; ...; y_{t+d-1}].
template <class Scalar>
detail::MatrixT<Scalar> hankel_matrix(const detail::MatrixT<Scalar>& y, Index delay) {
  if (delay < 1) throw ArgumentError("hankel_matrix: delay must be >= 1");
  const Index q = y.rows();
  const Index cols = y.cols() - delay + 1;
  if (cols < 1) throw ArgumentError("hankel_matrix: series too short for the delay");
  detail::MatrixT<Scalar> h(q * delay, cols);
  for (Index t = 0; t < cols; ++t)
    for (Index k = 0; k < delay; ++k) h.block(k * q, t, q, 1) = y.col(t + k);
  return h;
}

/// Removes eigenvalues within `tol` of an earlier one (keeps first).
inline void deduplicate(ModeDecomposition& d, double tol = 1e-6) {
  std::vector<Index> keep;
  for (std::size_t i = 0; i < d.eigvals_discrete.size(); ++i) {
    bool dup = false;
    for (Index j : keep)
      if (std::abs(d.eigvals_discrete[i] - d.eigvals_discrete[static_cast<std::size_t>(j)]) < tol)
        dup = true;
    if (!dup) keep.push_back(static_cast<Index>(i));
  }
  if (keep.size() == d.eigvals_discrete.size()) return;
  ModeDecomposition out = d;
  out.eigvals_discrete.clear();
  out.eigvals_continuous.clear();
  out.modes.resize(d.modes.rows(), static_cast<Index>(keep.size()));
  out.eigfun_coeffs.resize(d.eigfun_coeffs.rows(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const auto j = static_cast<std::size_t>(keep[c]);
    out.eigvals_discrete.push_back(d.eigvals_discrete[j]);
    out.eigvals_continuous.push_back(d.eigvals_continuous[j]);
    if (d.modes.cols() > 0) out.modes.col(static_cast<Index>(c)) = d.modes.col(keep[c]);
    if (d.eigfun_coeffs.cols() > 0)
      out.eigfun_coeffs.col(static_cast<Index>(c)) = d.eigfun_coeffs.col(keep[c]);
  }
  out.eigfun_values.resize(0, 0);
  d = std::move(out);
}

/// Hankel DMD: exact DMD on delay-stacked snapshots of depth `delay`.
template <class Scalar>
ModeDecomposition hankel_dmd(const detail::MatrixT<Scalar>& y, Index delay, double dt = 1.0,
                             std::optional<Index> rank = std::nullopt) {
  if (y.cols() <= delay + 1) throw ArgumentError("hankel_dmd: series too short for the delay");
  const auto h = hankel_matrix<Scalar>(y, delay);
  ModeDecomposition d = dmd_exact<Scalar>(h, dt, rank);
  d.method = ModeMethod::HankelDMD;
  d.modes = CMatrix(d.modes.topRows(y.rows()));
  deduplicate(d);
  return d;
}

using Dictionary = std::function<CVector(const Vector&)>;

inline Dictionary identity_dictionary() {
  return [](const Vector& y) { return CVector(y.cast<Complex>()); };
}

/// Angle from an observation: a scalar is the angle itself, a 2-vector is
/// read as (cos, sin).
inline double observed_angle(const Vector& y) {
  if (y.size() == 1) return y(0);
  if (y.size() == 2) return std::atan2(y(1), y(0));
  throw ArgumentError("observed_angle: expected a scalar angle or a (cos, sin) pair");
}

/// (e^{-i M theta}, ..., e^{i M theta}) for the observed angle theta.
inline Dictionary exponential_dictionary(int max_harmonic = 10) {
  return [max_harmonic](const Vector& y) {
    const double theta = observed_angle(y);
    CVector f(2 * max_harmonic + 1);
    for (int m = -max_harmonic; m <= max_harmonic; ++m)
      f(m + max_harmonic) = std::exp(Complex(0.0, m * theta));
    return f;
  };
}

inline CMatrix apply_dictionary(const Dictionary& dict, const Matrix& y) {
  if (y.cols() == 0) return {};
  const CVector first = dict(y.col(0));
  CMatrix out(first.size(), y.cols());
  out.col(0) = first;
  for (Index t = 1; t < y.cols(); ++t) out.col(t) = dict(y.col(t));
  return out;
}

/// Extended DMD: least-squares operator on dictionary features,
/// psi(y_{t+1}) ~= K psi(y_t). Eigenfunctions are psi(y)^T xi with xi a left
/// eigenvector of K.
inline ModeDecomposition edmd(const Matrix& y, const Dictionary& dict, double dt = 1.0) {
  if (y.cols() < 3) throw ArgumentError("edmd: need at least two snapshot pairs");
  const CMatrix psi = apply_dictionary(dict, y);
  const Index p = psi.rows();
  const Index m = psi.cols() - 1;
  const CMatrix x = psi.leftCols(m);
  const CMatrix z = psi.rightCols(m);
  CMatrix g = x * x.adjoint();
  const CMatrix a = z * x.adjoint();
  ModeDecomposition d;
  d.dt = dt;
  d.method = ModeMethod::EDMD;
  Eigen::SelfAdjointEigenSolver<CMatrix> gs(g, Eigen::EigenvaluesOnly);
  const double gmax = gs.eigenvalues().cwiseAbs().maxCoeff();
  if (!(gs.eigenvalues().minCoeff() > 1e-13 * std::max(gmax, 1e-300))) {
    g.diagonal().array() += Complex(1e-12 * std::max(1.0, gmax), 0.0);
    d.ridge_applied = true;
  }
  // K = A G^{-1}  <=>  G K^H = A^H
  Eigen::LDLT<CMatrix> ldlt(g);
  const CMatrix k = ldlt.solve(a.adjoint()).adjoint();
  CVector vals;
  CMatrix left;
  detail::eig(CMatrix(k.transpose()), vals, left);
  const auto order = detail::spectral_order(vals);
  d.rank = p;
  detail::fill_eigvals(d, vals, order, p);
  d.eigfun_coeffs.resize(p, p);
  for (Index j = 0; j < p; ++j) d.eigfun_coeffs.col(j) = left.col(order[static_cast<std::size_t>(j)]);
  d.defective = detail::column_condition(d.eigfun_coeffs) > 1e12;
  d.eigfun_values = psi.transpose() * d.eigfun_coeffs;
  d.modes = detail::fit_modes(d.eigfun_values, y.transpose().cast<Complex>());
  return d;
}

/// Subspace DMD: the future block [y_{t+2}; y_{t+3}] is projected onto the
/// row space of the past block [y_t; y_{t+1}]; the leading left singular
/// vectors U = [U1; U2] of the projection give A = U1^+ U2. The default rank
/// is min(numerical rank, q).
template <class Scalar>
ModeDecomposition subspace_dmd(const detail::MatrixT<Scalar>& y, double dt = 1.0,
                               std::optional<Index> rank = std::nullopt) {
  using Mat = detail::MatrixT<Scalar>;
  if (y.cols() < 4) throw ArgumentError("subspace_dmd: need a series of length >= 4");
  const Index q = y.rows();
  const Index m = y.cols() - 3;
  Mat yp(2 * q, m), yf(2 * q, m);
  yp << y.leftCols(m), y.middleCols(1, m);
  yf << y.middleCols(2, m), y.middleCols(3, m);
  Eigen::BDCSVD<Mat> psvd(yp, Eigen::ComputeThinV);
  const Index prank = detail::numerical_rank<Scalar>(psvd.singularValues(), 1e-10);
  ModeDecomposition d;
  d.dt = dt;
  d.method = ModeMethod::SubspaceDMD;
  if (prank == 0) throw ArgumentError("subspace_dmd: past block has rank 0");
  const Mat vp = psvd.matrixV().leftCols(prank);
  const Mat proj = (yf * vp) * vp.adjoint();
  Eigen::BDCSVD<Mat> osvd(proj, Eigen::ComputeThinU);
  const Index orank = detail::numerical_rank<Scalar>(osvd.singularValues(), 1e-10);
  if (orank == 0) throw ArgumentError("subspace_dmd: projected future has rank 0");
  Index r = std::min(orank, q);
  if (rank) r = std::min(*rank, r);
  d.rank = r;
  d.rank_deficient = orank < 2 * q;
  const Mat u1 = osvd.matrixU().topLeftCorner(q, r);
  const Mat u2 = osvd.matrixU().block(q, 0, q, r);
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(u1);
  const Mat a = cod.solve(u2);
  CVector vals;
  CMatrix vecs;
  detail::eig(a, vals, vecs);
  const auto order = detail::spectral_order(vals);
  detail::fill_eigvals(d, vals, order, r);
  CMatrix w(r, r);
  for (Index j = 0; j < r; ++j) w.col(j) = vecs.col(order[static_cast<std::size_t>(j)]);
  d.eigfun_coeffs = w;
  d.modes = detail::to_complex(u1) * w;
  d.defective = detail::column_condition(w) > 1e12;
  return d;
}

// ---------------------------------------------------------------------------
// Eigenvalue scoring
// ---------------------------------------------------------------------------

enum class EigenDomain { Discrete, Continuous };

/// Keeps eigenvalues with lo <= |lambda| <= hi (discrete domain).
inline ModeDecomposition retain(const ModeDecomposition& d, double lo = 0.2, double hi = 1.1) {
  ModeDecomposition out = d;
  out.eigvals_discrete.clear();
  out.eigvals_continuous.clear();
  std::vector<Index> keep;
  for (std::size_t i = 0; i < d.eigvals_discrete.size(); ++i) {
    const double a = std::abs(d.eigvals_discrete[i]);
    if (a >= lo && a <= hi) {
      keep.push_back(static_cast<Index>(i));
      out.eigvals_discrete.push_back(d.eigvals_discrete[i]);
      out.eigvals_continuous.push_back(d.eigvals_continuous[i]);
    }
  }
  auto pick = [&](const CMatrix& m) {
    if (m.cols() != static_cast<Index>(d.eigvals_discrete.size())) return CMatrix(m);
    CMatrix r(m.rows(), static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) r.col(static_cast<Index>(c)) = m.col(keep[c]);
    return r;
  };
  out.modes = pick(d.modes);
  out.eigfun_coeffs = pick(d.eigfun_coeffs);
  out.eigfun_values = pick(d.eigfun_values);
  return out;
}

struct EigenError {
  double mean = 0.0;
  std::vector<double> per_truth;
  bool unmatched = false;
};

/// Greedy matching: each true eigenvalue, in order, takes the nearest unused
/// estimate (ties to the lower index). Unmatched truths score |truth|.
inline EigenError eigen_error(const std::vector<Complex>& estimated,
                              const std::vector<Complex>& truth) {
  if (truth.empty()) throw ArgumentError("eigen_error: truth list is empty");
  EigenError e;
  std::vector<bool> used(estimated.size(), false);
  for (const Complex& t : truth) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = estimated.size();
    for (std::size_t i = 0; i < estimated.size(); ++i) {
      if (used[i]) continue;
      const double dist = std::abs(estimated[i] - t);
      if (dist < best) {
        best = dist;
        best_i = i;
      }
    }
    if (best_i == estimated.size()) {
      e.unmatched = true;
      best = std::abs(t);
    } else {
      used[best_i] = true;
    }
    e.per_truth.push_back(best);
  }
  e.mean = std::accumulate(e.per_truth.begin(), e.per_truth.end(), 0.0) /
           static_cast<double>(e.per_truth.size());
  return e;
}

inline EigenError eigen_error(const ModeDecomposition& d, const std::vector<Complex>& truth,
                              EigenDomain domain) {
  const auto& est = domain == EigenDomain::Discrete ? d.eigvals_discrete : d.eigvals_continuous;
  if (domain == EigenDomain::Continuous) {
    std::vector<Complex> finite;
    for (const auto& z : est)
      if (std::isfinite(z.real()) && std::isfinite(z.imag())) finite.push_back(z);
    return eigen_error(finite, truth);
  }
  return eigen_error(est, truth);
}

}  // namespace elto

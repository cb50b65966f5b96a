#pragma once

// Positive definite kernels, Gram matrices and empirical centering.
//
// Sample matrices are stored one sample per column (feature_dim x count),
// which matches Eigen's column-major layout.

#include "elto/common.hpp"

#include <string>
#include <string_view>

namespace elto {

enum class KernelKind { RBF, Linear };

inline std::string_view to_string(KernelKind k) {
  return k == KernelKind::RBF ? "rbf" : "linear";
}

inline KernelKind kernel_kind_from_string(std::string_view s) {
  if (s == "rbf" || s == "RBF" || s == "gaussian") return KernelKind::RBF;
  if (s == "linear" || s == "Linear") return KernelKind::Linear;
  throw ArgumentError("unknown kernel kind '" + std::string(s) + "'");
}

/// k(a,b) = exp(-gamma * |a-b|^2) for RBF, a.b for Linear.
struct KernelSpec {
  KernelKind kind = KernelKind::RBF;
  double gamma = 1.0;

  static KernelSpec rbf(double gamma) { return {KernelKind::RBF, gamma}; }
  static KernelSpec linear() { return {KernelKind::Linear, 0.0}; }

  void validate() const {
    if (kind == KernelKind::RBF && !(gamma > 0.0 && std::isfinite(gamma)))
      throw ArgumentError("RBF bandwidth must be positive, got " + std::to_string(gamma));
  }

  template <class A, class B>
  double operator()(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) const {
    if (kind == KernelKind::Linear) return a.dot(b);
    return std::exp(-gamma * (a - b).squaredNorm());
  }

  bool operator==(const KernelSpec&) const = default;
};

template <class A, class B>
double eval_kernel(const KernelSpec& spec, const Eigen::MatrixBase<A>& a,
                   const Eigen::MatrixBase<B>& b) {
  spec.validate();
  if (a.size() != b.size())
    throw ArgumentError("kernel arguments differ in dimension (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  return spec(a, b);
}

struct GramMatrix {
  Matrix values;
  std::string row_source;
  std::string col_source;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  double operator()(Index i, Index j) const { return values(i, j); }
};

/// Raw kernel matrix K(i,j) = k(rows[:,i], cols[:,j]).
inline Matrix kernel_matrix(const KernelSpec& spec, const Matrix& rows, const Matrix& cols) {
  spec.validate();
  if (rows.cols() == 0 || cols.cols() == 0) throw ArgumentError("gram: empty sample set");
  if (rows.rows() != cols.rows())
    throw ArgumentError("gram: feature dimensions differ (" + std::to_string(rows.rows()) +
                        " vs " + std::to_string(cols.rows()) + ")");
  Matrix k(rows.cols(), cols.cols());
  if (spec.kind == KernelKind::Linear) {
    k.noalias() = rows.transpose() * cols;
    return k;
  }
  // Direct differences keep the diagonal of a self-Gram exactly 1.
  const Index d = rows.rows();
  for (Index j = 0; j < cols.cols(); ++j) {
    for (Index i = 0; i < rows.cols(); ++i) {
      double s = 0.0;
      for (Index f = 0; f < d; ++f) {
        const double diff = rows(f, i) - cols(f, j);
        s += diff * diff;
      }
      k(i, j) = std::exp(-spec.gamma * s);
    }
  }
  return k;
}

/// Self-Gram; symmetric by construction (upper triangle mirrored).
inline Matrix kernel_matrix(const KernelSpec& spec, const Matrix& samples) {
  spec.validate();
  if (samples.cols() == 0) throw ArgumentError("gram: empty sample set");
  const Index n = samples.cols();
  Matrix k(n, n);
  if (spec.kind == KernelKind::Linear) {
    k.noalias() = samples.transpose() * samples;
    return symmetrized(k);
  }
  const Index d = samples.rows();
  for (Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Index i = 0; i < j; ++i) {
      double s = 0.0;
      for (Index f = 0; f < d; ++f) {
        const double diff = samples(f, i) - samples(f, j);
        s += diff * diff;
      }
      const double v = std::exp(-spec.gamma * s);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

inline GramMatrix gram(const KernelSpec& spec, const Matrix& rows, const Matrix& cols,
                       std::string row_source = "rows", std::string col_source = "cols") {
  return {kernel_matrix(spec, rows, cols), std::move(row_source), std::move(col_source)};
}

inline GramMatrix gram(const KernelSpec& spec, const Matrix& samples,
                       std::string source = "samples") {
  std::string col = source;
  return {kernel_matrix(spec, samples), std::move(source), std::move(col)};
}

/// Kernel section k(samples[:,i], x) for every column i.
template <class X>
Vector kernel_column(const KernelSpec& spec, const Matrix& samples, const Eigen::MatrixBase<X>& x) {
  if (samples.rows() != x.size())
    throw ArgumentError("kernel_column: dimension mismatch (" + std::to_string(samples.rows()) +
                        " vs " + std::to_string(x.size()) + ")");
  Vector k(samples.cols());
  for (Index i = 0; i < samples.cols(); ++i) k(i) = spec(samples.col(i), x);
  return k;
}

/// Q = I - (1/n) 1 1^T.
inline Matrix centering_matrix(Index n) {
  if (n <= 0) throw ArgumentError("centering_matrix: n must be positive");
  Matrix q = Matrix::Constant(n, n, -1.0 / static_cast<double>(n));
  q.diagonal().array() += 1.0;
  return q;
}

/// True when `g` is symmetric to `sym_tol` and its smallest eigenvalue is
/// at least -psd_rel_tol * |g|_2.
inline bool is_symmetric_psd(const Matrix& g, double sym_tol = 1e-12, double psd_rel_tol = 1e-10) {
  if (g.rows() != g.cols()) return false;
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > sym_tol * std::max(1.0, g.cwiseAbs().maxCoeff()))
    return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(g), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double norm = ev.cwiseAbs().maxCoeff();
  return ev.minCoeff() >= -psd_rel_tol * norm;
}

}  // namespace elto

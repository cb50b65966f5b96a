#include "elto/modes.hpp"
#include "elto/systems.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace elto;

namespace {

Matrix rollout(const Matrix& a, const Vector& x0, Index steps) {
  Matrix y(a.rows(), steps);
  y.col(0) = x0;
  for (Index t = 1; t < steps; ++t) y.col(t) = a * y.col(t - 1);
  return y;
}

std::vector<Complex> eigenvalues_of(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  return {es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()};
}

}  // namespace

TEST(KernelKoopman, ConstantStatesHaveUnitEigenvalue) {
  const Matrix x = Vector{{0.4, -1.0}}.replicate(1, 12);
  const auto ev = koopman_eigenvalues(kernel_koopman(x, KernelSpec::rbf(1.0), 1e-6));
  EXPECT_NEAR(std::abs(ev.front() - Complex(1.0, 0.0)), 0.0, 1e-5);
}

TEST(KernelKoopman, ScalarDecayRecovered) {
  Matrix x(1, 30);
  x(0, 0) = 2.0;
  for (Index n = 1; n < 30; ++n) x(0, n) = 0.7 * x(0, n - 1);
  const auto ev = koopman_eigenvalues(kernel_koopman(x, KernelSpec::linear(), 1e-10));
  EXPECT_NEAR(std::abs(ev.front() - Complex(0.7, 0.0)), 0.0, 1e-6);
}

TEST(KernelKoopman, RotationSpectrum) {
  const double th = 0.3;
  const Matrix a{{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
  const auto ev = koopman_eigenvalues(
      kernel_koopman(rollout(a, Vector{{1.0, 0.0}}, 40), KernelSpec::linear(), 1e-10));
  EXPECT_NEAR(std::abs(ev[0] - std::polar(1.0, th)), 0.0, 1e-6);
  EXPECT_NEAR(std::abs(ev[1] - std::polar(1.0, -th)), 0.0, 1e-6);
}

TEST(KernelKoopman, LinearFeatureSpaceSpectrumMatchesSampleSpace) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(3, 60);
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < 3; ++i) x(i, j) = g(rng);
  const Matrix pre = x.leftCols(59), post = x.rightCols(59);
  const auto full = koopman_eigenvalues(kernel_koopman(pre, post, KernelSpec::linear(), 1e-3));
  const auto fast = kernel_koopman_spectrum(pre, post, KernelSpec::linear(), 1e-3);
  ASSERT_EQ(fast.size(), full.size());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(std::abs(fast[i] - full[i]), 1e-9);
  for (std::size_t i = 3; i < fast.size(); ++i) EXPECT_LT(std::abs(full[i]), 1e-9);
  const auto rbf = kernel_koopman_spectrum(pre, post, KernelSpec::rbf(0.5), 1e-3);
  const auto rbf_full = koopman_eigenvalues(kernel_koopman(pre, post, KernelSpec::rbf(0.5), 1e-3));
  EXPECT_EQ(rbf, rbf_full);
}

TEST(KernelKoopman, InvalidInputsThrow) {
  Matrix x = Matrix::Ones(1, 5);
  EXPECT_THROW(kernel_koopman(x, KernelSpec::rbf(1.0), 0.0), ArgumentError);
  EXPECT_THROW(kernel_koopman(Matrix::Ones(1, 2), KernelSpec::rbf(1.0), 1e-3), ArgumentError);
  x(0, 2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(kernel_koopman(x, KernelSpec::rbf(1.0), 1e-3), ArgumentError);
}

TEST(Decompose, DiagonalOrdering) {
  KoopmanEstimate k;
  k.K = Vector{{0.5, 0.9}}.asDiagonal();
  k.pre = Matrix::Identity(2, 2);
  k.post = k.pre;
  k.kernel = KernelSpec::linear();
  k.g1_solver.compute(Matrix::Identity(2, 2));
  const ModeDecomposition d = decompose(k, Matrix(2, 0), Matrix(1, 0), 1.0, 2);
  EXPECT_NEAR(d.eigvals_discrete[0].real(), 0.9, 1e-15);
  EXPECT_NEAR(d.eigvals_discrete[1].real(), 0.5, 1e-15);
  EXPECT_THROW(decompose(k, Matrix(2, 0), Matrix(1, 0), 1.0, 3), ArgumentError);
}

TEST(Decompose, ContinuousEigenvaluesAreLogOverDt) {
  const Matrix a{{0.9, -0.3}, {0.3, 0.9}};
  const Matrix y = rollout(a, Vector{{1.0, 0.5}}, 30);
  const KoopmanEstimate k = kernel_koopman(y, KernelSpec::linear(), 1e-10);
  const ModeDecomposition d = decompose(k, y.leftCols(29), y.leftCols(29), 0.25, 2);
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_LT(std::abs(d.eigvals_continuous[i] - std::log(d.eigvals_discrete[i]) / 0.25), 1e-14);
}

TEST(Decompose, ModeSumReconstructsLinearTrajectory) {
  const Matrix a{{0.9, 0.2, 0.0}, {-0.2, 0.9, 0.1}, {0.0, 0.0, 0.5}};
  const Matrix y = rollout(a, Vector{{1.0, -0.5, 0.8}}, 40);
  const KoopmanEstimate k = kernel_koopman(y, KernelSpec::linear(), 1e-12);
  const ModeDecomposition d = decompose(k, y, y, 1.0, 3);
  const Matrix rec = reconstruct(d, 40);
  EXPECT_LT((rec - y).norm() / y.norm(), 1e-6);
}

TEST(Decompose, ConjugatePairsOnRandomRealMatrix) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  KoopmanEstimate k;
  k.K.resize(8, 8);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) k.K(i, j) = g(rng);
  k.pre = Matrix::Identity(8, 8);
  k.kernel = KernelSpec::linear();
  k.g1_solver.compute(Matrix::Identity(8, 8));
  const ModeDecomposition d = decompose(k, Matrix(8, 0), Matrix(1, 0), 1.0, 8);
  for (const Complex& z : d.eigvals_discrete) {
    double best = 1e300;
    for (const Complex& w : d.eigvals_discrete) best = std::min(best, std::abs(std::conj(z) - w));
    EXPECT_LT(best, 1e-10);
  }
  for (std::size_t i = 1; i < d.eigvals_discrete.size(); ++i)
    EXPECT_GE(std::abs(d.eigvals_discrete[i - 1]) + 1e-10, std::abs(d.eigvals_discrete[i]));
}

TEST(DmdExact, DiagonalSystem) {
  const Matrix y = rollout(Vector{{0.9, 0.8}}.asDiagonal(), Vector{{1.0, 1.0}}, 20);
  const ModeDecomposition d = dmd_exact<double>(y);
  EXPECT_NEAR(std::abs(d.eigvals_discrete[0] - 0.9), 0.0, 1e-10);
  EXPECT_NEAR(std::abs(d.eigvals_discrete[1] - 0.8), 0.0, 1e-10);
}

TEST(DmdExact, SingleGrowingMode) {
  const Vector v{{0.3, -1.0, 2.0}};
  Matrix y(3, 15);
  for (Index t = 0; t < 15; ++t) y.col(t) = std::pow(1.05, static_cast<double>(t)) * v;
  const ModeDecomposition d = dmd_exact<double>(y);
  ASSERT_EQ(d.rank, 1);
  EXPECT_NEAR(std::abs(d.eigvals_discrete[0] - 1.05), 0.0, 1e-12);
}

TEST(DmdExact, MatchesLeastSquaresOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix y(3, 60);
  y.col(0) = Vector{{g(rng), g(rng), g(rng)}};
  const Matrix a{{0.5, 0.3, -0.1}, {-0.2, 0.6, 0.2}, {0.1, 0.0, 0.7}};
  for (Index t = 1; t < 60; ++t) y.col(t) = a * y.col(t - 1) + 0.1 * Vector{{g(rng), g(rng), g(rng)}};
  const Matrix y1 = y.leftCols(59), y2 = y.rightCols(59);
  const Matrix ls = (y2 * y1.transpose()) * (y1 * y1.transpose()).inverse();
  const auto truth = eigenvalues_of(ls);
  const ModeDecomposition d = dmd_exact<double>(y);
  EXPECT_LT(eigen_error(d.eigvals_discrete, truth).mean, 1e-8);
}

TEST(DmdExact, RankZeroThrows) {
  EXPECT_THROW(dmd_exact<double>(Matrix::Zero(2, 10)), ArgumentError);
  EXPECT_THROW(dmd_exact<double>(Matrix::Ones(2, 2)), ArgumentError);
}

TEST(HankelDmd, PureSinusoid) {
  const double w = 0.7, dt = 0.1;
  Matrix y(1, 100);
  for (Index t = 0; t < 100; ++t) y(0, t) = std::sin(w * dt * static_cast<double>(t) + 0.3);
  for (Index d : {2, 5, 10}) {
    const ModeDecomposition m = hankel_dmd<double>(y, d, dt);
    EXPECT_LT(eigen_error(m.eigvals_discrete, {std::polar(1.0, w * dt), std::polar(1.0, -w * dt)}).mean,
              1e-8)
        << "d=" << d;
  }
}

TEST(HankelDmd, DelayOneEqualsExactDmd) {
  const Matrix y = rollout(Matrix{{0.8, 0.4}, {-0.4, 0.8}}, Vector{{1.0, 0.0}}, 25);
  const auto a = hankel_dmd<double>(y, 1).eigvals_discrete;
  const auto b = dmd_exact<double>(y).eigvals_discrete;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(std::abs(a[i] - b[i]), 1e-12);
}

TEST(HankelDmd, TooShortThrows) {
  EXPECT_THROW(hankel_dmd<double>(Matrix::Ones(1, 5), 4), ArgumentError);
}

TEST(HankelDmd, VdpFundamental) {
  VdpConfig cfg;
  const TimeSeries s = simulate_vdp(cfg, 0);
  const Matrix y = s.samples().rightCols(2000);
  const ModeDecomposition d = hankel_dmd<double>(y, 30, cfg.dt);
  const Complex truth = std::polar(1.0, kVdpOmega * cfg.dt);
  EXPECT_LT(eigen_error(retain(d).eigvals_discrete, {truth}).mean, 1e-3);
}

TEST(Edmd, IdentityDictionaryEqualsDmd) {
  const Matrix y = rollout(Matrix{{0.9, 0.1}, {-0.3, 0.7}}, Vector{{1.0, 2.0}}, 30);
  const auto a = edmd(y, identity_dictionary()).eigvals_discrete;
  const auto b = dmd_exact<double>(y).eigvals_discrete;
  EXPECT_LT(eigen_error(a, b).mean, 1e-10);
}

TEST(Edmd, RotationWithExponentialDictionary) {
  const double w = 0.4, dt = 0.5;
  Matrix y(1, 200);
  for (Index t = 0; t < 200; ++t) y(0, t) = 0.1 + w * dt * static_cast<double>(t);
  const ModeDecomposition d = edmd(y, exponential_dictionary(10), dt);
  std::vector<Complex> truth;
  for (int m = -10; m <= 10; ++m) truth.push_back(std::exp(Complex(0.0, -m * w * dt)));
  EXPECT_LT(eigen_error(d.eigvals_discrete, truth).mean, 1e-8);
}

TEST(Edmd, SingularFeaturesAreRidged) {
  const Matrix y = Matrix::Ones(2, 10);
  const ModeDecomposition d = edmd(y, identity_dictionary());
  EXPECT_TRUE(d.ridge_applied);
}

TEST(Edmd, NoiselessStuartLandauFrequency) {
  SlConfig cfg;
  const TimeSeries s = simulate_sl(cfg, 0);
  const Matrix y = s.samples().rightCols(1500);
  const ModeDecomposition d = edmd(y, exponential_dictionary(10), cfg.dt);
  const EigenError e = eigen_error(d, {Complex(0.0, kSlOmega)}, EigenDomain::Continuous);
  EXPECT_LT(e.mean, 1e-3);
}

TEST(SubspaceDmd, NoiselessEqualsExactDmd) {
  const Matrix a{{0.7, 0.3, 0.0}, {-0.3, 0.7, 0.1}, {0.0, 0.0, 0.4}};
  const Matrix y = rollout(a, Vector{{1.0, 0.5, -0.7}}, 40);
  const auto s = subspace_dmd<double>(y).eigvals_discrete;
  const auto d = dmd_exact<double>(y).eigvals_discrete;
  EXPECT_LT(eigen_error(s, d).mean, 1e-8);
}

TEST(SubspaceDmd, ConstantSequence) {
  const ModeDecomposition d = subspace_dmd<double>(Matrix::Constant(2, 12, 0.3));
  ASSERT_GE(d.eigvals_discrete.size(), 1u);
  EXPECT_NEAR(std::abs(d.eigvals_discrete[0] - 1.0), 0.0, 1e-10);
  EXPECT_TRUE(d.rank_deficient);
}

TEST(SubspaceDmd, TooShortThrows) {
  EXPECT_THROW(subspace_dmd<double>(Matrix::Ones(1, 3)), ArgumentError);
}

TEST(SubspaceDmd, LessBiasedThanExactDmdUnderObservationNoise) {
  const Matrix a{{0.8, 0.4, 0.0}, {-0.4, 0.8, 0.0}, {0.0, 0.0, 0.6}};
  const auto truth = eigenvalues_of(a);
  double bias_s = 0.0, bias_d = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix x(3, 5000), y(3, 5000);
    x.col(0) = Vector{{g(rng), g(rng), g(rng)}};
    for (Index t = 1; t < 5000; ++t)
      x.col(t) = a * x.col(t - 1) + 0.1 * Vector{{g(rng), g(rng), g(rng)}};
    for (Index t = 0; t < 5000; ++t)
      for (Index i = 0; i < 3; ++i) y(i, t) = x(i, t) + 0.1 * g(rng);
    // summed over seeds; the comparison is of the totals
    bias_s += eigen_error(subspace_dmd<double>(y, 1.0, 3).eigvals_discrete, truth).mean;
    bias_d += eigen_error(dmd_exact<double>(y).eigvals_discrete, truth).mean;
  }
  EXPECT_LT(bias_s, bias_d);
}

TEST(EigenError, Basics) {
  const std::vector<Complex> t{{1.0, 0.0}, {0.0, 1.0}, {0.5, -0.5}};
  EXPECT_EQ(eigen_error(t, t).mean, 0.0);
  EXPECT_NEAR(eigen_error({Complex(1.0, 0.1)}, {Complex(1.0, 0.0)}).mean, 0.1, 1e-15);
  const std::vector<Complex> p{t[2], t[0], t[1]};
  EXPECT_EQ(eigen_error(p, t).mean, eigen_error(t, t).mean);
  const std::vector<Complex> est{{0.9, 0.05}, {0.1, 0.8}, {0.4, -0.6}};
  std::vector<Complex> perm{est[1], est[2], est[0]};
  EXPECT_DOUBLE_EQ(eigen_error(perm, t).mean, eigen_error(est, t).mean);
}

TEST(EigenError, UnmatchedTruthsPenalizedByMagnitude) {
  const EigenError e = eigen_error({Complex(1.0, 0.0)}, {Complex(1.0, 0.0), Complex(0.0, 2.0)});
  EXPECT_TRUE(e.unmatched);
  EXPECT_DOUBLE_EQ(e.mean, 1.0);
  EXPECT_THROW(eigen_error({Complex(1.0, 0.0)}, {}), ArgumentError);
}

TEST(Retain, KeepsMagnitudeWindow) {
  ModeDecomposition d;
  d.eigvals_discrete = {Complex(1.2, 0), Complex(0.9, 0), Complex(0.1, 0)};
  d.eigvals_continuous = {Complex(0.1, 0), Complex(-0.1, 0), Complex(-2.3, 0)};
  d.modes = CMatrix::Ones(1, 3);
  const ModeDecomposition r = retain(d);
  ASSERT_EQ(r.eigvals_discrete.size(), 1u);
  EXPECT_EQ(r.eigvals_discrete[0], Complex(0.9, 0));
  EXPECT_EQ(r.modes.cols(), 1);
}

TEST(Equivalence, AllMethodsRecoverNoiselessLinearSpectrum) {
  const Matrix a{{0.85, 0.3, 0.0}, {-0.3, 0.85, 0.05}, {0.0, 0.0, 0.6}};
  const Matrix y = rollout(a, Vector{{1.0, -0.4, 0.9}}, 60);
  const auto truth = eigenvalues_of(a);
  EXPECT_LT(eigen_error(dmd_exact<double>(y).eigvals_discrete, truth).mean, 1e-5);
  EXPECT_LT(eigen_error(hankel_dmd<double>(y, 1).eigvals_discrete, truth).mean, 1e-5);
  EXPECT_LT(eigen_error(edmd(y, identity_dictionary()).eigvals_discrete, truth).mean, 1e-5);
  EXPECT_LT(eigen_error(subspace_dmd<double>(y).eigvals_discrete, truth).mean, 1e-5);
  const auto kk = koopman_eigenvalues(kernel_koopman(y, KernelSpec::linear(), 1e-12));
  EXPECT_LT(eigen_error(kk, truth).mean, 1e-5);
}

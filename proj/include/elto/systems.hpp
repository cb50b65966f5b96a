#pragma once

// Seeded simulators for the benchmark systems and their reference spectra.

#include "elto/common.hpp"
#include "elto/time_series.hpp"

#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace elto {

struct PendulumConfig {
  double g = 9.81;
  double L = 1.0;
  double sim_hz = 10000.0;
  double obs_hz = 10.0;
  double n_p = 0.1;  ///< process noise std per unit time (per step when per_step_noise)
  double n_o = 0.01;  ///< observation noise std
  Index length = 30;  ///< number of observations
  bool per_step_noise = false;
  std::optional<Vector> initial;  ///< (q, qdot); drawn from the seed when empty

  void validate() const {
    require(g > 0 && L > 0, "pendulum: g and L must be positive");
    require(sim_hz > 0 && obs_hz > 0, "pendulum: rates must be positive");
    require(obs_hz <= sim_hz, "pendulum: obs_hz must not exceed sim_hz");
    require(n_p >= 0 && n_o >= 0, "pendulum: noise levels must be >= 0");
    require(length > 0, "pendulum: length must be positive");
    require(!initial || initial->size() == 2, "pendulum: initial state must be (q, qdot)");
  }
};

struct VdpConfig {
  double mu = 2.0;
  double dt = 0.1;
  Vector x0 = Vector{{2.0, 0.0}};
  double obs_noise_std = 0.0;
  Index length = 3000;

  void validate() const {
    require(dt > 0, "vdp: dt must be positive");
    require(x0.size() == 2, "vdp: x0 must be 2-dimensional");
    require(obs_noise_std >= 0, "vdp: noise must be >= 0");
    require(length > 0, "vdp: length must be positive");
  }
};

struct SlConfig {
  double mu = 1.0;
  double gamma = 0.9;
  double beta = 0.3;
  double eps_process = 0.0;  ///< variance of the process noise
  double dt = 0.1;
  double r0 = 0.1;
  double theta0 = 0.0;
  double obs_noise_var = 0.0;
  Index length = 3000;

  void validate() const {
    require(dt > 0, "sl: dt must be positive");
    require(eps_process >= 0 && obs_noise_var >= 0, "sl: noise must be >= 0");
    require(length > 0, "sl: length must be positive");
    require(r0 >= 0, "sl: r0 must be >= 0");
  }
};

/// Semi-implicit Euler at sim_hz; the angle is observed at obs_hz. `latent`
/// holds the noiseless (q, qdot) at each observation time.
inline TimeSeries simulate_pendulum(const PendulumConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double q, qd;
  if (cfg.initial) {
    q = (*cfg.initial)(0);
    qd = (*cfg.initial)(1);
  } else {
    std::uniform_real_distribution<double> uq(0.1 * std::numbers::pi, 0.4 * std::numbers::pi);
    std::uniform_real_distribution<double> uv(-0.25 * std::numbers::pi, 0.25 * std::numbers::pi);
    q = uq(rng);
    qd = uv(rng);
  }
  const double h = 1.0 / cfg.sim_hz;
  const auto steps_per_obs = static_cast<Index>(std::llround(cfg.sim_hz / cfg.obs_hz));
  const double noise_scale = cfg.per_step_noise ? cfg.n_p : cfg.n_p * std::sqrt(h);
  const double w2 = cfg.g / cfg.L;

  TimeSeries ts;
  ts.data.resize(cfg.length, 1);
  ts.latent.resize(cfg.length, 2);
  ts.dt = 1.0 / cfg.obs_hz;
  ts.seed = seed;
  ts.system_tag = "pendulum";
  ts.noise_meta = {{"n_p", cfg.n_p}, {"n_o", cfg.n_o}};
  for (Index t = 0; t < cfg.length; ++t) {
    if (t > 0) {
      for (Index s = 0; s < steps_per_obs; ++s) {
        qd += -w2 * std::sin(q) * h;
        if (noise_scale > 0) qd += noise_scale * normal(rng);
        q += qd * h;
      }
    }
    ts.latent(t, 0) = q;
    ts.latent(t, 1) = qd;
    ts.data(t, 0) = q + (cfg.n_o > 0 ? cfg.n_o * normal(rng) : 0.0);
  }
  return ts;
}

namespace detail {

template <class F>
Vector rk4_step(const F& f, const Vector& x, double dt) {
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * dt * k1);
  const Vector k3 = f(x + 0.5 * dt * k2);
  const Vector k4 = f(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// RK4 trajectory of dx = y, dy = mu (1 - x^2) y - x; both coordinates are
/// observed with i.i.d. Gaussian noise.
inline TimeSeries simulate_vdp(const VdpConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto f = [mu = cfg.mu](const Vector& s) {
    return Vector{{s(1), mu * (1.0 - s(0) * s(0)) * s(1) - s(0)}};
  };
  TimeSeries ts;
  ts.data.resize(cfg.length, 2);
  ts.latent.resize(cfg.length, 2);
  ts.dt = cfg.dt;
  ts.seed = seed;
  ts.system_tag = "vdp";
  ts.noise_meta = {{"obs_noise_std", cfg.obs_noise_std}};
  Vector x = cfg.x0;
  for (Index t = 0; t < cfg.length; ++t) {
    if (t > 0) x = detail::rk4_step(f, x, cfg.dt);
    ts.latent.row(t) = x.transpose();
  }
  ts.data = ts.latent;
  if (cfg.obs_noise_std > 0)
    for (Index t = 0; t < cfg.length; ++t)
      for (Index c = 0; c < 2; ++c) ts.data(t, c) += cfg.obs_noise_std * normal(rng);
  return ts;
}

/// Polar drift dr = mu r - r^3, dtheta = gamma - beta r^2 by RK4, then an
/// Euler-Maruyama increment sqrt(eps dt) N(0,1) on each Cartesian
/// coordinate. Observations are (cos theta, sin theta) plus noise of
/// variance obs_noise_var; `latent` holds (r, theta) with theta unwrapped.
inline TimeSeries simulate_sl(const SlConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto f = [&cfg](const Vector& s) {
    const double r2 = s(0) * s(0);
    return Vector{{cfg.mu * s(0) - r2 * s(0), cfg.gamma - cfg.beta * r2}};
  };
  const double diff = std::sqrt(cfg.eps_process * cfg.dt);
  const double obs_std = std::sqrt(cfg.obs_noise_var);
  TimeSeries ts;
  ts.data.resize(cfg.length, 2);
  ts.latent.resize(cfg.length, 2);
  ts.dt = cfg.dt;
  ts.seed = seed;
  ts.system_tag = "sl";
  ts.noise_meta = {{"eps_process", cfg.eps_process}, {"obs_noise_var", cfg.obs_noise_var}};
  Vector s{{cfg.r0, cfg.theta0}};
  for (Index t = 0; t < cfg.length; ++t) {
    if (t > 0) {
      s = detail::rk4_step(f, s, cfg.dt);
      if (diff > 0) {
        const double x = s(0) * std::cos(s(1)) + diff * normal(rng);
        const double y = s(0) * std::sin(s(1)) + diff * normal(rng);
        const double r = std::hypot(x, y);
        // keep theta continuous: add the wrapped angle change
        const double dtheta = std::remainder(std::atan2(y, x) - s(1), 2.0 * std::numbers::pi);
        s(0) = r;
        s(1) += dtheta;
      }
    }
    ts.latent.row(t) = s.transpose();
  }
  for (Index t = 0; t < cfg.length; ++t) {
    ts.data(t, 0) = std::cos(ts.latent(t, 1));
    ts.data(t, 1) = std::sin(ts.latent(t, 1));
    if (obs_std > 0) {
      ts.data(t, 0) += obs_std * normal(rng);
      ts.data(t, 1) += obs_std * normal(rng);
    }
  }
  return ts;
}

/// Observed angle series atan2 of the (cos, sin) observation, one column.
inline Matrix sl_angles(const TimeSeries& ts) {
  if (ts.dim() != 2) throw ArgumentError("sl_angles: expected (cos, sin) observations");
  Matrix a(ts.length(), 1);
  for (Index t = 0; t < ts.length(); ++t) a(t, 0) = std::atan2(ts.data(t, 1), ts.data(t, 0));
  return a;
}

inline constexpr double kVdpOmega = 0.823498;
inline constexpr double kSlOmega = 0.6;
inline constexpr double kSlKappa = 3.0;

/// e^{+-i m omega dt}, m = 1..M, each pair with the positive phase first.
inline std::vector<Complex> true_eigs_vdp(int M, double omega = kVdpOmega, double dt = 0.1) {
  if (M < 1) throw ArgumentError("true_eigs_vdp: M must be >= 1");
  std::vector<Complex> out;
  for (int m = 1; m <= M; ++m) {
    out.push_back(std::polar(1.0, m * omega * dt));
    out.push_back(std::polar(1.0, -m * omega * dt));
  }
  return out;
}

/// i m omega - (eps/2) kappa m^2 omega^2 and its conjugate, m = 1..M.
inline std::vector<Complex> true_eigs_sl(int M, double eps, double omega = kSlOmega,
                                         double kappa = kSlKappa) {
  if (M < 1) throw ArgumentError("true_eigs_sl: M must be >= 1");
  if (eps < 0) throw ArgumentError("true_eigs_sl: eps must be >= 0");
  std::vector<Complex> out;
  for (int m = 1; m <= M; ++m) {
    const double re = -0.5 * eps * kappa * m * m * omega * omega;
    out.emplace_back(re, m * omega);
    out.emplace_back(re, -m * omega);
  }
  return out;
}

}  // namespace elto

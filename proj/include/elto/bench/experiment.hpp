#pragma once

// Experiment driver: builds datasets from a config, runs the filter or mode
// pipelines per trial, and aggregates results. Every random draw derives from
// the config seed, so a rerun reproduces results.csv byte for byte.

#include "elto/bench/config.hpp"
#include "elto/bench/metrics.hpp"
#include "elto/bench/search.hpp"
#include "elto/csv.hpp"
#include "elto/filter.hpp"
#include "elto/modes.hpp"
#include "elto/operators.hpp"
#include "elto/realization.hpp"
#include "elto/systems.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

namespace elto::bench {

inline constexpr std::uint64_t kTrialSeedStride = 10007;

/// Stateless 64-bit mix of (base, stream, index) into an RNG seed.
inline std::uint64_t sub_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

inline std::uint64_t trial_seed(std::uint64_t base, Index trial) {
  return base + static_cast<std::uint64_t>(trial) * kTrialSeedStride;
}

struct MetricValue {
  std::string method;
  std::string metric;
  double value = 0.0;
};

struct TrialResult {
  Index trial = 0;
  std::uint64_t seed = 0;
  double noise = 0.0;
  std::vector<MetricValue> metrics;
  std::string failure;  ///< nonempty when the trial threw
  std::vector<double> search_trace;  ///< best validation value per search generation
  double wall_seconds = 0.0;

  double get(const std::string& method, const std::string& metric) const {
    for (const auto& m : metrics)
      if (m.method == method && m.metric == metric) return m.value;
    throw ArgumentError("no metric " + method + "/" + metric);
  }
};

struct Aggregate {
  double noise = 0.0;
  std::string method;
  std::string metric;
  Summary summary;
};

struct ResultRecord {
  ExperimentConfig config;
  std::vector<TrialResult> trials;
  std::vector<Aggregate> aggregates;
  double wall_seconds = 0.0;

  bool failed() const {
    return std::any_of(trials.begin(), trials.end(),
                       [](const TrialResult& t) { return !t.failure.empty(); });
  }

  const Aggregate& aggregate(double noise, const std::string& method,
                             const std::string& metric) const {
    for (const auto& a : aggregates)
      if (a.noise == noise && a.method == method && a.metric == metric) return a;
    throw ArgumentError("no aggregate " + method + "/" + metric);
  }
};

/// Per (noise, method, metric) summaries in first-appearance order. Failed
/// trials contribute nothing.
inline std::vector<Aggregate> aggregate_trials(const std::vector<TrialResult>& trials) {
  std::vector<std::tuple<double, std::string, std::string>> keys;
  std::map<std::tuple<double, std::string, std::string>, std::vector<double>> values;
  for (const auto& t : trials)
    for (const auto& m : t.metrics) {
      auto key = std::make_tuple(t.noise, m.method, m.metric);
      auto [it, inserted] = values.try_emplace(key);
      if (inserted) keys.push_back(key);
      it->second.push_back(m.value);
    }
  std::vector<Aggregate> out;
  for (const auto& key : keys)
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), summarize(values[key])});
  return out;
}

// ---------------------------------------------------------------------------
// Filter pipeline
// ---------------------------------------------------------------------------

/// Median squared pairwise distance over a fixed strided subset of columns.
inline double median_sq_distance(const Matrix& x) {
  std::vector<double> d;
  for (Index i = 0; i < x.cols(); i += 7)
    for (Index j = i + 3; j < x.cols(); j += 11) d.push_back((x.col(i) - x.col(j)).squaredNorm());
  if (d.empty())
    for (Index i = 0; i < x.cols(); ++i)
      for (Index j = i + 1; j < x.cols(); ++j) d.push_back((x.col(i) - x.col(j)).squaredNorm());
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double m = d[d.size() / 2];
  return m > 0 ? m : 1.0;
}

struct FilterData {
  std::vector<TimeSeries> fit;
  std::vector<TimeSeries> validation;
  std::vector<TimeSeries> test;
};

/// Time-ordered one-step predictions eta_t against y_t for t >= burn_in.
inline PredictionSet filter_predictions(const EltoFilterModel& model,
                                        std::span<const TimeSeries> set, Index burn_in,
                                        const FilterOptions& opts = {}) {
  const auto outs = run_filter_batch(model, set, nullptr, opts);
  Index count = 0;
  for (const auto& s : set) count += std::max<Index>(0, s.length() - burn_in);
  const Index q = model.obs_dim();
  PredictionSet p{Matrix(q, count), Matrix(q, count)};
  Index c = 0;
  for (std::size_t k = 0; k < set.size(); ++k)
    for (Index t = burn_in; t < set[k].length(); ++t, ++c) {
      p.pred.col(c) = outs[k][static_cast<std::size_t>(t)].eta;
      p.truth.col(c) = set[k].data.row(t).transpose();
    }
  if (count == 0) throw ArgumentError("filter: no steps at or after the burn-in");
  return p;
}

/// Hyperparameters a search moves, in natural units.
struct FilterParams {
  Regularization eps;
  double state_gamma = 1.0;  ///< scale or absolute gamma, per the kernel config
  double obs_gamma = 1.0;
};

inline FilterParams base_params(const ModelConfig& m) {
  return {{m.eps_t, m.eps_o, m.eps_q}, m.state_kernel.gamma, m.obs_kernel.gamma};
}

inline double& param_slot(FilterParams& p, const std::string& name) {
  if (name == "eps_t") return p.eps.eps_t;
  if (name == "eps_o") return p.eps.eps_o;
  if (name == "eps_q") return p.eps.eps_q;
  if (name == "state_scale") return p.state_gamma;
  if (name == "obs_scale") return p.obs_gamma;
  throw ArgumentError("unknown search parameter '" + name + "'");
}

inline FilterParams apply_log10(FilterParams p, const std::vector<std::string>& names,
                                const Vector& x) {
  for (std::size_t i = 0; i < names.size(); ++i)
    param_slot(p, names[i]) = std::pow(10.0, x(static_cast<Index>(i)));
  return p;
}

/// Realization plus transition samples; everything the operators need
/// except the searched hyperparameters.
struct FilterFeatures {
  RealizationModel realization;
  TransitionSamples samples;
  double state_median = 1.0;
  double obs_median = 1.0;
};

inline RealizationConfig realization_config(const ModelConfig& m, std::uint64_t seed) {
  RealizationConfig rc;
  rc.kernel_y = m.realization_kernel.resolve(1.0);
  rc.h = m.h;
  rc.rank = m.rank;
  rc.rank_threshold = m.rank_threshold;
  rc.whitening_ridge = m.whitening_ridge;
  rc.epochs = m.epochs;
  rc.learning_rate = m.learning_rate;
  rc.seed = seed;
  rc.reference = m.reference;
  return rc;
}

inline FilterFeatures filter_features(const ModelConfig& m, std::span<const TimeSeries> fit,
                                      std::uint64_t seed) {
  FilterFeatures f;
  f.realization = optimize_w(fit, realization_config(m, sub_seed(seed, 11, 0)));
  if (f.realization.aborted_nonfinite)
    throw ConsistencyError("realization training diverged: " + f.realization.diagnostic);
  f.samples = transition_samples(f.realization, fit, m.max_pairs, sub_seed(seed, 12, 0));
  f.state_median = median_sq_distance(f.samples.post);
  f.obs_median = median_sq_distance(f.samples.y_post);
  return f;
}

inline KernelConfig with_gamma(KernelConfig k, double gamma) {
  k.gamma = gamma;
  return k;
}

inline EltoFilterModel build_filter_model(const FilterFeatures& f, const ModelConfig& m,
                                          const FilterParams& p) {
  return fit_operators(f.samples, with_gamma(m.state_kernel, p.state_gamma).resolve(f.state_median),
                       with_gamma(m.obs_kernel, p.obs_gamma).resolve(f.obs_median), p.eps);
}

struct FilterFit {
  FilterFeatures features;
  FilterParams params;
  EltoFilterModel model;
  SearchResult search;
  double validation_mse = std::numeric_limits<double>::quiet_NaN();
};

inline Index burn_in_steps(const ExperimentConfig& c) { return c.data.burn_in.value_or(c.model.h); }

/// Fits on `fit`, tunes on `validation` when a search is configured, and
/// returns the final model.
inline FilterFit fit_filter(const ExperimentConfig& c, const FilterData& data, std::uint64_t seed) {
  FilterFit out;
  out.features = filter_features(c.model, data.fit, seed);
  out.params = base_params(c.model);
  const Index burn = burn_in_steps(c);
  FilterOptions fopts;
  fopts.init_samples = c.model.init_samples;
  fopts.seed = sub_seed(seed, 13, 0);
  const std::vector<std::string> fixed;
  const auto& names = c.search.method == SearchMethod::None ? fixed : c.search.parameters;
  auto objective = [&](const Vector& x) {
    const FilterParams p = apply_log10(out.params, names, x);
    const EltoFilterModel model = build_filter_model(out.features, c.model, p);
    const PredictionSet ps = filter_predictions(model, data.validation, burn, fopts);
    return mse(ps.pred, ps.truth);
  };
  if (c.search.method != SearchMethod::None) {
    if (data.validation.empty()) throw ArgumentError("search: empty validation set");
    Vector x0(static_cast<Index>(names.size()));
    FilterParams start = out.params;
    for (std::size_t i = 0; i < names.size(); ++i)
      x0(static_cast<Index>(i)) = std::log10(param_slot(start, names[i]));
    if (c.search.method == SearchMethod::CmaEs)
      out.search = cma_es(objective, x0, c.search.sigma0, c.search.budget, c.search.seed);
    else
      out.search = grid_search(objective, grid_points(c.search.grid));
    if (!std::isfinite(out.search.best_value))
      throw ConsistencyError("search: every candidate failed" +
                             (out.search.trace.empty() ? std::string()
                                                       : ": " + out.search.trace.back().error));
    out.params = apply_log10(out.params, names, out.search.best_params);
    out.validation_mse = out.search.best_value;
  } else if (!data.validation.empty()) {
    out.validation_mse = objective(Vector::Zero(0));
  }
  out.model = build_filter_model(out.features, c.model, out.params);
  return out;
}

inline std::vector<TimeSeries> pendulum_set(const PendulumConfig& p, std::uint64_t seed,
                                            std::uint64_t stream, Index count) {
  std::vector<TimeSeries> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k)
    out.push_back(simulate_pendulum(p, sub_seed(seed, stream, static_cast<std::uint64_t>(k))));
  return out;
}

/// The validation tail of a training set: trailing sequences when there are
/// several, otherwise the trailing part of the single sequence.
inline void split_validation(std::vector<TimeSeries> train, double fraction, FilterData& out) {
  if (train.empty()) throw ArgumentError("split_validation: empty training set");
  if (train.size() >= 2) {
    auto nval = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
    nval = std::clamp<std::size_t>(nval, 1, train.size() - 1);
    out.validation.assign(train.end() - static_cast<std::ptrdiff_t>(nval), train.end());
    train.resize(train.size() - nval);
    out.fit = std::move(train);
    return;
  }
  const TimeSeries& s = train.front();
  const auto nval = static_cast<Index>(std::llround(fraction * static_cast<double>(s.length())));
  if (nval < 2 || s.length() - nval < 2)
    throw ArgumentError("split_validation: series too short to split");
  TimeSeries fit = s, val = s;
  fit.data = s.data.topRows(s.length() - nval);
  val.data = s.data.bottomRows(nval);
  if (s.latent.rows() == s.length()) {
    fit.latent = s.latent.topRows(s.length() - nval);
    val.latent = s.latent.bottomRows(nval);
  }
  out.fit = {std::move(fit)};
  out.validation = {std::move(val)};
}

inline FilterData pendulum_data(const ExperimentConfig& c, std::uint64_t seed) {
  FilterData d;
  split_validation(pendulum_set(c.pendulum, seed, 1, c.data.train_sequences),
                   c.data.validation_fraction, d);
  d.test = pendulum_set(c.pendulum, seed, 2, c.data.test_sequences);
  return d;
}

/// Consecutive chunks of `length` rows (remainder dropped); 0 keeps one chunk.
inline std::vector<TimeSeries> chunk_series(const TimeSeries& s, Index length) {
  if (length <= 0 || length >= s.length()) return {s};
  std::vector<TimeSeries> out;
  for (Index start = 0; start + length <= s.length(); start += length) {
    TimeSeries part = s;
    part.data = s.data.middleRows(start, length);
    part.latent = s.latent.rows() == s.length() ? Matrix(s.latent.middleRows(start, length)) : Matrix();
    out.push_back(std::move(part));
  }
  return out;
}

inline FilterData csv_data(const ExperimentConfig& c) {
  const TimeSeries all =
      load_csv(c.csv.path, CsvOptions{c.csv.dt, c.csv.has_header, c.csv.center});
  const auto ntrain =
      static_cast<Index>(std::llround(c.csv.train_fraction * static_cast<double>(all.length())));
  if (ntrain < 2 || all.length() - ntrain < 2)
    throw ArgumentError("csv_filter: too few rows to split into train and test");
  TimeSeries train = all, test = all;
  train.data = all.data.topRows(ntrain);
  test.data = all.data.bottomRows(all.length() - ntrain);
  FilterData d;
  split_validation(chunk_series(train, c.csv.sequence_length), c.data.validation_fraction, d);
  d.test = chunk_series(test, c.csv.sequence_length);
  return d;
}

inline TrialResult filter_trial(const ExperimentConfig& c, const FilterData& data,
                                std::uint64_t seed) {
  TrialResult r;
  const FilterFit fit = fit_filter(c, data, seed);
  const Index burn = burn_in_steps(c);
  FilterOptions fopts;
  fopts.init_samples = c.model.init_samples;
  fopts.seed = sub_seed(seed, 13, 0);
  const PredictionSet ps = filter_predictions(fit.model, data.test, burn, fopts);
  const double elto = mse(ps.pred, ps.truth);
  const PredictionSet lp = locf_predictions(data.test, burn);
  const double locf = mse(lp.pred, lp.truth);
  r.metrics.push_back({"elto", "mse", elto});
  if (std::isfinite(fit.validation_mse)) r.metrics.push_back({"elto", "val_mse", fit.validation_mse});
  r.metrics.push_back({"elto", "locf_ratio", locf / elto});
  r.metrics.push_back({"elto", "rank", static_cast<double>(fit.features.realization.r)});
  r.metrics.push_back({"elto", "pairs", static_cast<double>(fit.model.size())});
  FilterParams chosen = fit.params;
  for (const auto& name : searchable_parameters())
    r.metrics.push_back({"elto", "log10_" + name, std::log10(param_slot(chosen, name))});
  r.metrics.push_back({"locf", "mse", locf});
  r.search_trace = fit.search.generation_best;
  return r;
}

// ---------------------------------------------------------------------------
// Mode pipelines
// ---------------------------------------------------------------------------

inline Dictionary mode_dictionary(const ModesConfig& m) {
  return m.dictionary == "exp" ? exponential_dictionary(m.dictionary_harmonics)
                               : identity_dictionary();
}

/// ELTO spectrum: realization states, consecutive pairs, kernel Koopman estimate.
inline ModeDecomposition elto_modes(const ModelConfig& m, const TimeSeries& s, std::uint64_t seed) {
  const RealizationModel rm = optimize_w(s, realization_config(m, sub_seed(seed, 21, 0)));
  if (rm.aborted_nonfinite) throw ConsistencyError("realization training diverged: " + rm.diagnostic);
  const Matrix x = extract_states(rm, s, StateHorizon::Observed);
  if (x.cols() < 3) throw ArgumentError("elto modes: series too short for the window length");
  Index pairs = x.cols() - 1;
  if (m.max_pairs > 0) pairs = std::min(pairs, m.max_pairs);
  const Index start = x.cols() - 1 - pairs;  // most recent pairs
  const Matrix pre = x.middleCols(start, pairs);
  const Matrix post = x.middleCols(start + 1, pairs);
  const KernelSpec k = m.state_kernel.resolve(median_sq_distance(pre));
  return spectrum_only(kernel_koopman_spectrum(pre, post, k, m.koopman_eps), s.dt, ModeMethod::ELTO);
}

inline ModeDecomposition run_mode_method(const std::string& method, const ExperimentConfig& c,
                                         const TimeSeries& s, std::uint64_t seed) {
  const Matrix y = s.samples();
  if (method == "elto") return elto_modes(c.model, s, seed);
  if (method == "dmd") return dmd_exact<double>(y, s.dt);
  if (method == "hdmd") return hankel_dmd<double>(y, c.modes.hankel_delay, s.dt);
  if (method == "edmd") return edmd(y, mode_dictionary(c.modes), s.dt);
  if (method == "sdmd")
    return subspace_dmd<Complex>(apply_dictionary(mode_dictionary(c.modes), y), s.dt);
  throw ArgumentError("unknown mode method '" + method + "'");
}

inline TrialResult modes_trial(const ExperimentConfig& c, std::uint64_t seed) {
  TrialResult r;
  TimeSeries s;
  std::vector<Complex> truth;
  EigenDomain domain;
  if (c.kind == ExperimentKind::VdpModes) {
    s = simulate_vdp(c.vdp, seed);
    truth = true_eigs_vdp(c.modes.harmonics, kVdpOmega, c.vdp.dt);
    domain = EigenDomain::Discrete;
  } else {
    s = simulate_sl(c.sl, seed);
    truth = true_eigs_sl(c.modes.harmonics, c.sl.eps_process, c.sl.gamma - c.sl.beta * c.sl.mu);
    domain = EigenDomain::Continuous;
  }
  for (const auto& method : c.modes.methods) {
    const ModeDecomposition d =
        retain(run_mode_method(method, c, s, seed), c.modes.retain_lo, c.modes.retain_hi);
    for (int m = 1; m <= c.modes.harmonics; ++m) {
      const std::vector<Complex> one{truth[static_cast<std::size_t>(2 * (m - 1))]};
      r.metrics.push_back({method, "eig_err_m" + std::to_string(m), eigen_error(d, one, domain).mean});
    }
    r.metrics.push_back({method, "eig_err_all", eigen_error(d, truth, domain).mean});
    r.metrics.push_back({method, "retained", static_cast<double>(d.eigvals_discrete.size())});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Worker count: ELTO_THREADS when set, else the hardware concurrency.
inline unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ELTO_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, jobs)));
}

/// Runs `jobs` independent tasks on a small pool; results land in job order.
template <class F>
void parallel_for(std::size_t jobs, F&& body) {
  const unsigned workers = worker_count(jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

inline std::vector<std::string> experiment_methods(const ExperimentConfig& c) {
  if (is_filter(c.kind)) return {"elto", "locf"};
  return c.modes.methods;
}

/// Runs every (noise, trial) cell. Trial i uses seed base + i * 10007; a
/// trial that throws is recorded as a failure and the rest still run.
inline ResultRecord run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  ResultRecord rec;
  rec.config = config;
  std::vector<double> noises = config.sweep.noise_values;
  if (noises.empty()) noises.push_back(config.noise());
  const auto ntrials = static_cast<std::size_t>(config.trials);
  rec.trials.resize(noises.size() * ntrials);

  std::optional<FilterData> csv;  // shared by every trial; loaded once
  if (config.kind == ExperimentKind::CsvFilter) csv = csv_data(config);

  parallel_for(rec.trials.size(), [&](std::size_t job) {
    const double noise = noises[job / ntrials];
    const auto trial = static_cast<Index>(job % ntrials);
    ExperimentConfig c = config;
    if (config.kind != ExperimentKind::CsvFilter) c.set_noise(noise);
    const std::uint64_t seed = trial_seed(config.seed, trial);
    const auto t0 = std::chrono::steady_clock::now();
    TrialResult r;
    try {
      switch (c.kind) {
        case ExperimentKind::PendulumFilter: r = filter_trial(c, pendulum_data(c, seed), seed); break;
        case ExperimentKind::CsvFilter: r = filter_trial(c, *csv, seed); break;
        case ExperimentKind::VdpModes:
        case ExperimentKind::SlModes: r = modes_trial(c, seed); break;
      }
    } catch (const std::exception& e) {
      r = TrialResult{};
      r.failure = e.what();
    }
    r.trial = trial;
    r.seed = seed;
    r.noise = noise;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.trials[job] = std::move(r);
  });
  rec.aggregates = aggregate_trials(rec.trials);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

struct SweepResult {
  std::vector<ResultRecord> records;  ///< one per noise value
  Index cells = 0;                    ///< noise values x methods
};

/// One record per noise value, each with the config's trial count.
inline SweepResult noise_sweep(const ExperimentConfig& config, const std::vector<double>& noises) {
  if (noises.empty()) throw ArgumentError("noise_sweep: no noise values");
  SweepResult out;
  for (double n : noises) {
    ExperimentConfig c = config;
    c.sweep.noise_values = {n};
    out.records.push_back(run_experiment(c));
  }
  out.cells = static_cast<Index>(noises.size() * experiment_methods(config).size());
  return out;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Long-format rows: experiment,method,noise,trial,metric,value. Values use
/// the shortest round-trip decimal form; failed trials emit a `failed` row.
inline void write_results_csv(std::ostream& out, const ResultRecord& rec) {
  out << "experiment,method,noise,trial,metric,value\n";
  for (const auto& t : rec.trials) {
    const std::string prefix = rec.config.name + ",";
    if (!t.failure.empty()) {
      out << prefix << "all," << format_double(t.noise) << ',' << t.trial << ",failed,1\n";
      continue;
    }
    for (const auto& m : t.metrics)
      out << prefix << m.method << ',' << format_double(t.noise) << ',' << t.trial << ','
          << m.metric << ',' << format_double(m.value) << '\n';
  }
}

struct CsvRow {
  std::string experiment, method;
  double noise = 0.0;
  Index trial = 0;
  std::string metric;
  double value = 0.0;
};

inline std::vector<CsvRow> read_results_csv(std::istream& in) {
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "experiment,method,noise,trial,metric,value")
        throw ParseError("results.csv: unexpected header", line_no);
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ParseError("results.csv: expected 6 columns", line_no);
    try {
      rows.push_back({cells[0], cells[1], std::stod(cells[2]), std::stol(cells[3]), cells[4],
                      std::stod(cells[5])});
    } catch (const std::exception&) {
      throw ParseError("results.csv: bad number", line_no);
    }
  }
  return rows;
}

inline Json summary_json(const Summary& s) {
  return Json{{"mean", s.mean}, {"std", s.stddev}, {"count", s.count}};
}

inline Json results_json(const ResultRecord& rec) {
  Json j;
  j["config"] = config_to_json(rec.config);
  Json trials = Json::array();
  for (const auto& t : rec.trials) {
    Json metrics = Json::array();
    for (const auto& m : t.metrics)
      metrics.push_back(Json{{"method", m.method}, {"metric", m.metric}, {"value", m.value}});
    trials.push_back(Json{{"trial", t.trial},
                          {"seed", t.seed},
                          {"noise", t.noise},
                          {"failure", t.failure.empty() ? Json(nullptr) : Json(t.failure)},
                          {"metrics", metrics},
                          {"search_trace", t.search_trace},
                          {"wall_seconds", t.wall_seconds}});
  }
  j["trials"] = trials;
  Json aggs = Json::array();
  for (const auto& a : rec.aggregates)
    aggs.push_back(Json{{"noise", a.noise},
                        {"method", a.method},
                        {"metric", a.metric},
                        {"summary", summary_json(a.summary)}});
  j["aggregates"] = aggs;
  j["failed"] = rec.failed();
  j["wall_seconds"] = rec.wall_seconds;
  return j;
}

/// Recomputes every aggregate from the per-trial rows and throws
/// ConsistencyError on any disagreement.
inline void check_aggregates(const ResultRecord& rec) {
  const auto fresh = aggregate_trials(rec.trials);
  if (fresh.size() != rec.aggregates.size())
    throw ConsistencyError("aggregates: count differs from the trial rows");
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    const auto& a = fresh[i];
    const auto& b = rec.aggregates[i];
    const double tol = 1e-12 * std::max(1.0, std::abs(a.summary.mean));
    if (a.noise != b.noise || a.method != b.method || a.metric != b.metric ||
        a.summary.count != b.summary.count || !(std::abs(a.summary.mean - b.summary.mean) <= tol) ||
        !(std::abs(a.summary.stddev - b.summary.stddev) <= tol))
      throw ConsistencyError("aggregates: mismatch for " + b.method + "/" + b.metric);
  }
}

enum class OutputFormat { Csv, Json };

/// Writes results.csv (always) and results.json (for OutputFormat::Json) into
/// `dir`, after cross-checking the aggregates.
inline void write_results(const ResultRecord& rec, const std::filesystem::path& dir,
                          OutputFormat format) {
  check_aggregates(rec);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "results.csv");
    if (!out) throw ArgumentError("cannot write " + (dir / "results.csv").string());
    write_results_csv(out, rec);
  }
  if (format == OutputFormat::Json) {
    std::ofstream out(dir / "results.json");
    if (!out) throw ArgumentError("cannot write " + (dir / "results.json").string());
    out << results_json(rec).dump(2) << '\n';
  }
}

}  // namespace elto::bench

#include "elto/bench/config.hpp"
#include "elto/bench/experiment.hpp"
#include "elto/bench/metrics.hpp"
#include "elto/bench/search.hpp"
#include "elto/model_io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace elto;
using namespace elto::bench;

namespace {

double sphere(const Vector& x) { return x.squaredNorm(); }

std::string csv_text(const ResultRecord& rec) {
  std::ostringstream out;
  write_results_csv(out, rec);
  return out.str();
}

/// Small VDP configuration that runs in well under a second per trial.
ExperimentConfig small_vdp(std::vector<std::string> methods, Index trials) {
  ExperimentConfig c;
  c.kind = ExperimentKind::VdpModes;
  c.name = "vdp_small";
  c.vdp.length = 800;
  c.trials = trials;
  c.seed = 5;
  c.modes.methods = std::move(methods);
  c.modes.hankel_delay = 20;
  c.model.h = 10;
  c.model.rank = 4;
  c.model.epochs = 5;
  c.model.reference = {ReferencePolicy::Last, 100};
  c.model.realization_kernel = KernelConfig::linear();
  c.model.state_kernel = KernelConfig::linear();
  c.model.max_pairs = 0;
  c.model.whitening_ridge = 1e-6;
  return c;
}

ExperimentConfig small_pendulum() {
  ExperimentConfig c;
  c.kind = ExperimentKind::PendulumFilter;
  c.name = "pend_small";
  c.data.train_sequences = 40;
  c.data.test_sequences = 10;
  c.model.epochs = 10;
  c.model.rank = 2;
  c.model.max_pairs = 120;
  c.model.reference = {ReferencePolicy::Random, 50};
  return c;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value, 1);
  }
  ~ScopedEnv() {
    if (old_) ::setenv(name_, old_->c_str(), 1);
    else ::unsetenv(name_);
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(Metrics, MseKnownValues) {
  EXPECT_DOUBLE_EQ(mse(Matrix{{1.0, 2.0}}, Matrix{{1.0, 2.0}}), 0.0);
  EXPECT_DOUBLE_EQ(mse(Matrix{{1.0, 2.0}}, Matrix{{0.0, 0.0}}), 2.5);
  EXPECT_DOUBLE_EQ(mse(Matrix{{3.0}, {1.0}}, Matrix{{0.0}, {1.0}}), 4.5);
  EXPECT_THROW(mse(Matrix(1, 2), Matrix(2, 1)), ArgumentError);
  EXPECT_THROW(mse(Matrix(0, 0), Matrix(0, 0)), ArgumentError);
}

TEST(Metrics, SummaryUsesUnbiasedDeviation) {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const Summary s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stddev, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(s.count, 4u);
  EXPECT_EQ(summarize(std::vector<double>{7.0}).stddev, 0.0);
}

TEST(Metrics, LocfShiftsByOneStep) {
  TimeSeries s;
  s.data = Matrix{{1.0}, {2.0}, {4.0}, {7.0}};
  const PredictionSet p = locf_predictions(std::span<const TimeSeries>(&s, 1), 2);
  ASSERT_EQ(p.pred.cols(), 2);
  EXPECT_EQ(p.pred(0, 0), 2.0);
  EXPECT_EQ(p.truth(0, 1), 7.0);
  EXPECT_DOUBLE_EQ(mse(p.pred, p.truth), (4.0 + 9.0) / 2.0);
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

TEST(GridSearch, SinglePoint) {
  const auto r = grid_search(sphere, grid_points({{2.0}}));
  EXPECT_EQ(r.best_params(0), 2.0);
  EXPECT_EQ(r.best_value, 4.0);
  EXPECT_EQ(r.trace.size(), 1u);
}

TEST(GridSearch, FindsKnownMinimum) {
  auto f = [](const Vector& x) { return std::pow(x(0) - 1.0, 2) + std::pow(x(1) + 2.0, 2); };
  const auto r = grid_search(f, grid_points({{-1, 0, 1, 2}, {-3, -2, -1}}));
  EXPECT_EQ(r.best_params(0), 1.0);
  EXPECT_EQ(r.best_params(1), -2.0);
  EXPECT_EQ(r.best_value, 0.0);
}

TEST(GridSearch, MatchesExhaustiveEvaluationOnQuadratic) {
  auto f = [](const Vector& x) { return 3 * x(0) * x(0) + x(0) * x(1) + 2 * x(1) * x(1) - x(1); };
  const std::vector<double> axis{-1.0, 0.0, 1.0};
  const auto r = grid_search(f, grid_points({axis, axis}));
  double best = std::numeric_limits<double>::infinity();
  for (double a : axis)
    for (double b : axis) best = std::min(best, f(Vector{{a, b}}));
  EXPECT_EQ(r.best_value, best);
  EXPECT_EQ(r.trace.size(), 9u);
  EXPECT_EQ(grid_points({axis, axis})[1], (Vector{{-1.0, 0.0}}));  // last axis fastest
}

TEST(GridSearch, FailuresScoreInfinityAndTiesKeepFirst) {
  auto f = [](const Vector& x) -> double {
    if (x(0) < 0) throw ArgumentError("bad");
    return x(0) == 2.0 ? std::nan("") : 1.0;
  };
  const auto r = grid_search(f, grid_points({{-1.0, 2.0, 5.0, 3.0}}));
  EXPECT_EQ(r.best_params(0), 5.0);
  EXPECT_FALSE(r.trace[0].error.empty());
  EXPECT_TRUE(std::isinf(r.trace[1].value));
  EXPECT_THROW(grid_search(f, {}), ArgumentError);
}

TEST(CmaEs, SolvesSphere) {
  const auto r = cma_es(sphere, Vector::Constant(3, 2.0), 1.0, 900, 1);
  EXPECT_LT(r.best_value, 1e-8);
}

TEST(CmaEs, BudgetBelowPopulationThrows) {
  EXPECT_EQ(cma_population(2), 6);
  EXPECT_EQ(cma_population(5), 8);
  EXPECT_THROW(cma_es(sphere, Vector::Zero(2), 1.0, 5, 0), ArgumentError);
  EXPECT_NO_THROW(cma_es(sphere, Vector::Zero(2), 1.0, 6, 0));
}

TEST(CmaEs, DeterministicUnderSeed) {
  auto f = [](const Vector& x) { return std::pow(1 - x(0), 2) + 100 * std::pow(x(1) - x(0) * x(0), 2); };
  const auto a = cma_es(f, Vector::Zero(2), 0.5, 120, 42);
  const auto b = cma_es(f, Vector::Zero(2), 0.5, 120, 42);
  EXPECT_EQ(a.best_params, b.best_params);
  EXPECT_EQ(a.generation_best, b.generation_best);
  const auto c = cma_es(f, Vector::Zero(2), 0.5, 120, 43);
  EXPECT_NE(a.trace[0].params, c.trace[0].params);
}

TEST(CmaEs, GenerationBestIsMonotoneAndCoversBudget) {
  const auto r = cma_es(sphere, Vector::Constant(4, 3.0), 0.3, 200, 3);
  const auto lambda = static_cast<std::size_t>(cma_population(4));
  EXPECT_EQ(r.generation_best.size(), 200 / lambda);
  for (std::size_t g = 1; g < r.generation_best.size(); ++g)
    EXPECT_LE(r.generation_best[g], r.generation_best[g - 1]);
  EXPECT_EQ(r.generation_best.back(), r.best_value);
  EXPECT_LE(r.trace.size(), 200u);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"pendulum_np01.json", "pendulum_np02.json", "vdp_modes.json",
                           "sl_modes.json", "csv_filter.json"}) {
    SCOPED_TRACE(name);
    const ExperimentConfig c = load_config(std::filesystem::path(ELTO_CONFIG_DIR) / name);
    EXPECT_FALSE(c.name.empty());
  }
  const auto csv = load_config(std::filesystem::path(ELTO_CONFIG_DIR) / "csv_filter.json");
  EXPECT_TRUE(std::filesystem::exists(csv.csv.path));
}

TEST(Config, JsonRoundTrip) {
  const ExperimentConfig c = load_config(std::filesystem::path(ELTO_CONFIG_DIR) / "pendulum_np01.json");
  const Json once = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(once)).dump(), once.dump());
  EXPECT_EQ(c.search.method, SearchMethod::CmaEs);
  EXPECT_EQ(c.model.realization_kernel.kind, KernelKind::Linear);
  EXPECT_EQ(c.search.parameters.size(), 5u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"experiment":"vdp_modes","trails":3})")), ParseError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"experiment":"nope"})")), ParseError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"trials":3})")), ParseError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"experiment":"vdp_modes","trials":0})")), ArgumentError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"experiment":"vdp_modes","model":{"h":"x"}})")),
               ParseError);
  EXPECT_THROW(
      config_from_json(Json::parse(R"({"experiment":"vdp_modes","modes":{"methods":["foo"]}})")),
      ArgumentError);
  EXPECT_THROW(config_from_json(Json::parse(
                   R"({"experiment":"vdp_modes","search":{"method":"cmaes"}})")),
               ArgumentError);
}

TEST(Config, TomlMatchesJson) {
  const std::string toml = R"(# comment
experiment = "sl_modes"
name = "sl"
trials = 3
seed = 1_000

[system]
eps_process = 0.04   # variance
obs_noise_var = 1e-2

[model]
h = 12
rank = 4
realization_kernel = "linear"

[model.reference]
policy = "last"
count = 50

[modes]
methods = ["elto", "edmd",]
retain_lo = 0.3
)";
  const Json j = parse_toml(toml);
  const ExperimentConfig c = config_from_json(j);
  EXPECT_EQ(c.kind, ExperimentKind::SlModes);
  EXPECT_EQ(c.trials, 3);
  EXPECT_EQ(c.seed, 1000u);
  EXPECT_EQ(c.sl.eps_process, 0.04);
  EXPECT_EQ(c.model.h, 12);
  EXPECT_EQ(c.model.reference.policy, ReferencePolicy::Last);
  EXPECT_EQ(c.model.reference.count, 50);
  EXPECT_EQ(c.modes.methods, (std::vector<std::string>{"elto", "edmd"}));
  EXPECT_EQ(c.modes.retain_lo, 0.3);
  EXPECT_EQ(config_to_json(c).dump(), config_to_json(config_from_json(config_to_json(c))).dump());
}

TEST(Config, TomlErrorsCarryLineNumbers) {
  const std::pair<const char*, std::size_t> cases[] = {
      {"a = 1\nb = \n", 2}, {"a = 1\n[x\n", 2}, {"a = 1\na = 2\n", 2},
      {"a = [1, 2\n", 1},   {"a = \"open\n", 1}, {"\n\nk = 1 2\n", 3}};
  for (const auto& [text, line] : cases) {
    SCOPED_TRACE(text);
    try {
      parse_toml(std::string(text));
      FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line);
    }
  }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

TEST(Experiment, SweepProducesOneRowPerCellAndTrial) {
  ExperimentConfig c = small_vdp({"dmd", "hdmd"}, 2);
  const std::vector<double> noises{0.0, 0.05, 0.1};
  const SweepResult s = noise_sweep(c, noises);
  EXPECT_EQ(s.cells, 6);
  ASSERT_EQ(s.records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& rec = s.records[i];
    EXPECT_FALSE(rec.failed());
    ASSERT_EQ(rec.trials.size(), 2u);
    EXPECT_EQ(rec.trials[0].noise, noises[i]);
    // per method: harmonics + eig_err_all + retained
    const auto per_trial = static_cast<std::size_t>(2 * (c.modes.harmonics + 2));
    EXPECT_EQ(rec.trials[1].metrics.size(), per_trial);
    std::istringstream in(csv_text(rec));
    EXPECT_EQ(read_results_csv(in).size(), 2 * per_trial);
  }
}

TEST(Experiment, HankelErrorGrowsWithObservationNoise) {
  ExperimentConfig c = small_vdp({"hdmd"}, 10);
  c.vdp.length = 1500;
  c.modes.hankel_delay = 30;
  c.sweep.noise_values = {0.01, 0.2};
  const ResultRecord rec = run_experiment(c);
  ASSERT_FALSE(rec.failed());
  const double low = rec.aggregate(0.01, "hdmd", "eig_err_m1").summary.mean;
  const double high = rec.aggregate(0.2, "hdmd", "eig_err_m1").summary.mean;
  EXPECT_EQ(rec.aggregate(0.2, "hdmd", "eig_err_m1").summary.count, 10u);
  EXPECT_LT(low, high);
}

TEST(Experiment, RerunIsByteIdenticalAcrossThreadCounts) {
  const ExperimentConfig c = small_vdp({"elto", "hdmd"}, 3);
  std::string one, two;
  {
    ScopedEnv env("ELTO_THREADS", "1");
    one = csv_text(run_experiment(c));
  }
  {
    ScopedEnv env("ELTO_THREADS", "3");
    two = csv_text(run_experiment(c));
  }
  EXPECT_EQ(one, two);
  EXPECT_EQ(one, csv_text(run_experiment(c)));
  ExperimentConfig other = c;
  other.seed += 1;
  EXPECT_NE(one, csv_text(run_experiment(other)));
}

TEST(Experiment, TrialSeedsFollowStride) {
  const ResultRecord rec = run_experiment(small_vdp({"dmd"}, 3));
  for (const auto& t : rec.trials) EXPECT_EQ(t.seed, 5u + static_cast<std::uint64_t>(t.trial) * 10007u);
}

TEST(Experiment, PendulumFilterBeatsCarryForward) {
  const ResultRecord rec = run_experiment(small_pendulum());
  ASSERT_FALSE(rec.failed()) << rec.trials[0].failure;
  const auto& t = rec.trials[0];
  EXPECT_TRUE(std::isfinite(t.get("elto", "mse")));
  EXPECT_LT(t.get("elto", "mse"), t.get("locf", "mse"));
  EXPECT_DOUBLE_EQ(t.get("elto", "locf_ratio"), t.get("locf", "mse") / t.get("elto", "mse"));
  EXPECT_EQ(t.get("elto", "pairs"), 120.0);
}

TEST(Experiment, GridSearchPicksBestValidationPoint) {
  ExperimentConfig c = small_pendulum();
  c.search.method = SearchMethod::Grid;
  c.search.parameters = {"eps_q"};
  c.search.grid = {{-7.0, -3.0, 0.0}};
  const ResultRecord rec = run_experiment(c);
  ASSERT_FALSE(rec.failed()) << rec.trials[0].failure;
  const auto& t = rec.trials[0];
  const double chosen = t.get("elto", "log10_eps_q");
  EXPECT_TRUE(chosen == -7.0 || chosen == -3.0 || chosen == 0.0);
  // the reported validation error is the minimum over the grid
  ExperimentConfig fixed = c;
  fixed.search.method = SearchMethod::None;
  for (double v : c.search.grid[0]) {
    fixed.model.eps_q = std::pow(10.0, v);
    EXPECT_LE(t.get("elto", "val_mse"),
              run_experiment(fixed).trials[0].get("elto", "val_mse") * (1 + 1e-12));
  }
}

TEST(Experiment, FailingTrialIsRecordedNotFatal) {
  ExperimentConfig c = small_pendulum();
  c.model.h = 20;  // windows longer than the 30-step sequences allow
  c.model.rank = 2;
  c.trials = 2;
  const ResultRecord rec = run_experiment(c);
  EXPECT_TRUE(rec.failed());
  EXPECT_FALSE(rec.trials[1].failure.empty());
  EXPECT_TRUE(rec.aggregates.empty());
  EXPECT_NE(csv_text(rec).find(",failed,1"), std::string::npos);
}

TEST(Experiment, AggregateCrossCheckDetectsTampering) {
  ResultRecord rec = run_experiment(small_vdp({"dmd"}, 3));
  EXPECT_NO_THROW(check_aggregates(rec));
  const auto& a = rec.aggregate(rec.trials[0].noise, "dmd", "eig_err_m1");
  std::vector<double> v;
  for (const auto& t : rec.trials) v.push_back(t.get("dmd", "eig_err_m1"));
  EXPECT_NEAR(a.summary.mean, summarize(v).mean, 1e-15);
  rec.aggregates[0].summary.mean += 1e-6;
  EXPECT_THROW(check_aggregates(rec), ConsistencyError);
  rec = run_experiment(small_vdp({"dmd"}, 3));
  rec.trials[2].metrics[0].value *= 2;
  EXPECT_THROW(check_aggregates(rec), ConsistencyError);
}

TEST(Experiment, ResultsCsvRoundTripsExactly) {
  const ResultRecord rec = run_experiment(small_vdp({"dmd", "hdmd"}, 2));
  std::istringstream in(csv_text(rec));
  const auto rows = read_results_csv(in);
  std::size_t k = 0;
  for (const auto& t : rec.trials)
    for (const auto& m : t.metrics) {
      ASSERT_LT(k, rows.size());
      EXPECT_EQ(rows[k].method, m.method);
      EXPECT_EQ(rows[k].metric, m.metric);
      EXPECT_EQ(rows[k].trial, t.trial);
      EXPECT_EQ(rows[k].value, m.value);
      ++k;
    }
  EXPECT_EQ(k, rows.size());
  const Json j = results_json(rec);
  EXPECT_EQ(j["aggregates"].size(), rec.aggregates.size());
  EXPECT_EQ(j["config"]["experiment"], "vdp_modes");
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

namespace {

SavedModel small_model() {
  ExperimentConfig c = small_pendulum();
  c.model.max_pairs = 60;
  const FilterData data = pendulum_data(c, 11);
  const FilterFit fit = fit_filter(c, data, 11);
  return {fit.model, fit.features.realization};
}

}  // namespace

TEST(ModelIo, RoundTripJsonAndCbor) {
  const SavedModel m = small_model();
  const auto dir = std::filesystem::temp_directory_path() / "elto_model_io";
  std::filesystem::create_directories(dir);
  PendulumConfig pc;
  const TimeSeries probe = simulate_pendulum(pc, 77);
  const auto ref = run_filter(m.filter, probe);
  for (const char* name : {"model.json", "model.bin"}) {
    SCOPED_TRACE(name);
    save_model(m, dir / name);
    const SavedModel back = load_model(dir / name);
    EXPECT_EQ(back.filter.X_post, m.filter.X_post);
    EXPECT_EQ(back.filter.kernel_x, m.filter.kernel_x);
    ASSERT_TRUE(back.realization.has_value());
    EXPECT_EQ(back.realization->w, m.realization->w);
    EXPECT_EQ(back.realization->B, m.realization->B);
    const auto out = run_filter(back.filter, probe);
    for (std::size_t t = 0; t < out.size(); ++t) EXPECT_EQ(out[t].eta, ref[t].eta);
    const Matrix states = extract_states(*back.realization, probe);
    EXPECT_EQ(states, extract_states(*m.realization, probe));
  }
  EXPECT_LT(std::filesystem::file_size(dir / "model.bin"), std::filesystem::file_size(dir / "model.json"));
}

TEST(ModelIo, TamperedSamplesAreDetected) {
  const SavedModel m = small_model();
  ModelJson j = model_to_json(m);
  EXPECT_NO_THROW(model_from_json(j));
  ModelJson bad = j;
  const double v = bad["X_post"]["data"][0][3].get<double>();
  bad["X_post"]["data"][0][3] = v + 0.25;
  EXPECT_THROW(model_from_json(bad), ConsistencyError);
  bad = j;
  bad["eps"]["eps_t"] = 2 * j["eps"]["eps_t"].get<double>();
  EXPECT_THROW(model_from_json(bad), ConsistencyError);
  bad = j;
  bad["X_pre"]["data"][1] = ModelJson::array({1.0});
  EXPECT_THROW(model_from_json(bad), ParseError);
  bad = j;
  bad["format"] = "other";
  EXPECT_THROW(model_from_json(bad), ParseError);
}

TEST(ModelIo, TraceCsvHasOneRowPerStep) {
  const SavedModel m = small_model();
  const TimeSeries probe = simulate_pendulum(PendulumConfig{}, 3);
  std::ostringstream out;
  write_filter_trace(out, run_filter(m.filter, probe));
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,eta_1,innovation_norm,sigma_1");
  Index rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, probe.length());
}

TEST(ModelIo, ModesJsonListsEigenvalues) {
  const Matrix y = simulate_vdp(VdpConfig{}, 1).samples();
  const ModeDecomposition d = hankel_dmd<double>(y, 10, 0.1);
  const ModelJson j = modes_to_json(d);
  EXPECT_EQ(j["method"], "HankelDMD");
  EXPECT_EQ(j["eigvals_discrete"].size(), d.eigvals_discrete.size());
  EXPECT_EQ(j["eigvals_discrete"][0][1].get<double>(), d.eigvals_discrete[0].imag());
}

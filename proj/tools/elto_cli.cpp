#include "elto/elto.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace elto;
using namespace elto::bench;

namespace {

struct CommonOptions {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<Index> trials;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "Experiment config (.json or .toml)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Override the base seed");
  cmd->add_option("--trials", o.trials, "Override the trial count");
  cmd->add_option("--format", o.format, "csv or json (results.csv is always written)")
      ->check(CLI::IsMember({"csv", "json"}));
}

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.trials) c.trials = *o.trials;
  c.validate();
  return c;
}

OutputFormat format_of(const CommonOptions& o) {
  return o.format == "json" ? OutputFormat::Json : OutputFormat::Csv;
}

void print_summary(const ResultRecord& rec, std::ostream& os) {
  for (const auto& a : rec.aggregates)
    os << rec.config.name << " noise=" << format_double(a.noise) << ' ' << a.method << ' '
       << a.metric << " mean=" << format_double(a.summary.mean)
       << " std=" << format_double(a.summary.stddev) << " n=" << a.summary.count << '\n';
  for (const auto& t : rec.trials)
    if (!t.failure.empty())
      os << "trial " << t.trial << " (noise " << format_double(t.noise) << ") failed: " << t.failure
         << '\n';
}

int finish(const ResultRecord& rec, const CommonOptions& o) {
  write_results(rec, o.out, format_of(o));
  print_summary(rec, std::cout);
  return rec.failed() ? 1 : 0;
}

int cmd_run(const CommonOptions& o, const char* name, bool (*accepts)(const ExperimentConfig&),
            const char* requirement) {
  const ExperimentConfig c = load(o);
  if (!accepts(c)) throw ArgumentError(std::string(name) + ": " + requirement);
  return finish(run_experiment(c), o);
}

/// Fits the filter for trial 0 and saves it next to the results.
int cmd_fit(const CommonOptions& o) {
  const ExperimentConfig c = load(o);
  if (!is_filter(c.kind)) throw ArgumentError("fit: needs a filter experiment config");
  const std::uint64_t seed = trial_seed(c.seed, 0);
  const FilterData data = c.kind == ExperimentKind::CsvFilter ? csv_data(c) : pendulum_data(c, seed);
  const FilterFit fit = fit_filter(c, data, seed);
  fs::create_directories(o.out);
  const SavedModel saved{fit.model, fit.features.realization};
  save_model(saved, fs::path(o.out) / "model.json");
  save_model(saved, fs::path(o.out) / "model.bin");

  ResultRecord rec;
  rec.config = c;
  TrialResult t = filter_trial(c, data, seed);
  t.seed = seed;
  t.noise = c.kind == ExperimentKind::CsvFilter ? 0.0 : c.noise();
  rec.trials.push_back(std::move(t));
  rec.aggregates = aggregate_trials(rec.trials);
  return finish(rec, o);
}

struct FilterCmd {
  std::string model;
  std::string input;
  std::string out = "out";
  double dt = 1.0;
  bool header = false;
  bool center = false;
  Index burn_in = 1;
};

/// Runs a saved model over a CSV and writes the per-step trace.
int cmd_filter(const FilterCmd& f) {
  const SavedModel saved = load_model(f.model);
  const TimeSeries series = load_csv(f.input, CsvOptions{f.dt, f.header, f.center});
  const auto trace = run_filter(saved.filter, series);
  fs::create_directories(f.out);
  std::ofstream out(fs::path(f.out) / "trace.csv");
  write_filter_trace(out, trace);

  ResultRecord rec;
  rec.config.name = "filter";
  rec.config.kind = ExperimentKind::CsvFilter;
  TrialResult t;
  Matrix pred(series.dim(), series.length() - f.burn_in), truth(pred.rows(), pred.cols());
  for (Index k = f.burn_in; k < series.length(); ++k) {
    pred.col(k - f.burn_in) = trace[static_cast<std::size_t>(k)].eta;
    truth.col(k - f.burn_in) = series.data.row(k).transpose();
  }
  t.metrics.push_back({"elto", "mse", mse(pred, truth)});
  rec.trials.push_back(std::move(t));
  rec.aggregates = aggregate_trials(rec.trials);
  CommonOptions o;
  o.out = f.out;
  return finish(rec, o);
}

/// Writes modes.json with each method's retained spectrum for trial 0.
void export_modes(const ExperimentConfig& c, const fs::path& dir) {
  const std::uint64_t seed = trial_seed(c.seed, 0);
  const TimeSeries s = c.kind == ExperimentKind::VdpModes ? simulate_vdp(c.vdp, seed)
                                                          : simulate_sl(c.sl, seed);
  ModelJson j = ModelJson::object();
  for (const auto& m : c.modes.methods)
    j[m] = modes_to_json(retain(run_mode_method(m, c, s, seed), c.modes.retain_lo, c.modes.retain_hi));
  fs::create_directories(dir);
  std::ofstream(dir / "modes.json") << j.dump(1) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel filtering and spectral estimation experiments"};
  app.require_subcommand(1);

  CommonOptions fit_o, modes_o, sweep_o, search_o;
  FilterCmd filter_o;
  auto* fit = app.add_subcommand("fit", "Fit a filter model (trial 0) and save model.json/model.bin");
  add_common(fit, fit_o);
  auto* filter = app.add_subcommand("filter", "Run a saved model over a CSV observation file");
  filter->add_option("-m,--model", filter_o.model, "model.json or model.bin")
      ->required()
      ->check(CLI::ExistingFile);
  filter->add_option("-i,--input", filter_o.input, "Observation CSV")->required()->check(CLI::ExistingFile);
  filter->add_option("-o,--out", filter_o.out, "Output directory");
  filter->add_option("--dt", filter_o.dt, "Sample spacing");
  filter->add_flag("--header", filter_o.header, "Skip a header row");
  filter->add_flag("--center", filter_o.center, "Subtract column means");
  filter->add_option("--burn-in", filter_o.burn_in, "First scored step")->check(CLI::PositiveNumber);
  auto* modes = app.add_subcommand("modes", "Spectral estimation experiment");
  add_common(modes, modes_o);
  auto* sweep = app.add_subcommand("sweep", "Noise sweep over any experiment");
  add_common(sweep, sweep_o);
  auto* search = app.add_subcommand("search", "Filter experiment with hyperparameter search");
  add_common(search, search_o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*fit) return cmd_fit(fit_o);
    if (*filter) return cmd_filter(filter_o);
    if (*modes) {
      const int rc = cmd_run(
          modes_o, "modes",
          [](const ExperimentConfig& c) { return !is_filter(c.kind); }, "needs a modes experiment config");
      export_modes(load(modes_o), modes_o.out);
      return rc;
    }
    if (*sweep)
      return cmd_run(
          sweep_o, "sweep", [](const ExperimentConfig& c) { return !c.sweep.noise_values.empty(); },
          "config has no sweep.noise_values");
    if (*search)
      return cmd_run(
          search_o, "search",
          [](const ExperimentConfig& c) { return is_filter(c.kind) && c.search.method != SearchMethod::None; },
          "needs a filter config with a search method");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

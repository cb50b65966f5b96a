#pragma once

// Experiment configuration: typed records, JSON (de)serialisation and a
// minimal TOML reader that produces the same JSON tree.

#include "elto/common.hpp"
#include "elto/kernels.hpp"
#include "elto/realization.hpp"
#include "elto/systems.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace elto::bench {

using Json = nlohmann::ordered_json;

enum class ExperimentKind { PendulumFilter, VdpModes, SlModes, CsvFilter };
enum class SearchMethod { None, Grid, CmaEs };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::PendulumFilter: return "pendulum_filter";
    case ExperimentKind::VdpModes: return "vdp_modes";
    case ExperimentKind::SlModes: return "sl_modes";
    case ExperimentKind::CsvFilter: return "csv_filter";
  }
  return "?";
}

inline bool is_filter(ExperimentKind k) {
  return k == ExperimentKind::PendulumFilter || k == ExperimentKind::CsvFilter;
}

inline std::string to_string(SearchMethod m) {
  switch (m) {
    case SearchMethod::None: return "none";
    case SearchMethod::Grid: return "grid";
    case SearchMethod::CmaEs: return "cmaes";
  }
  return "?";
}

/// Kernel choice in a config. For RBF either an absolute `gamma` or a
/// `scale` relative to the inverse median squared pairwise distance of the
/// samples the kernel is applied to.
struct KernelConfig {
  KernelKind kind = KernelKind::RBF;
  double gamma = 1.0;
  bool median_scaled = true;

  static KernelConfig linear() { return {KernelKind::Linear, 0.0, false}; }
  static KernelConfig scaled(double s) { return {KernelKind::RBF, s, true}; }
  static KernelConfig absolute(double g) { return {KernelKind::RBF, g, false}; }

  /// Concrete kernel given the median squared distance of the data.
  KernelSpec resolve(double median_sq) const {
    if (kind == KernelKind::Linear) return KernelSpec::linear();
    if (!median_scaled) return KernelSpec::rbf(gamma);
    return KernelSpec::rbf(gamma / std::max(median_sq, 1e-300));
  }
};

struct ModelConfig {
  Index h = 5;
  std::optional<Index> rank;
  double rank_threshold = 0.05;
  double whitening_ridge = 0.0;
  Index epochs = 200;
  double learning_rate = 1e-3;
  ReferenceSpec reference{ReferencePolicy::Random, 200};
  KernelConfig realization_kernel = KernelConfig::linear();
  KernelConfig state_kernel = KernelConfig::scaled(1.0);
  KernelConfig obs_kernel = KernelConfig::scaled(1.0);
  double eps_t = 1e-3;
  double eps_o = 1e-4;
  double eps_q = 1e-6;
  Index max_pairs = 600;  ///< 0 keeps every transition pair
  double koopman_eps = 1e-10;
  std::optional<Index> init_samples;
};

/// Parameters a search may move; all are searched as log10 values.
inline const std::vector<std::string>& searchable_parameters() {
  static const std::vector<std::string> names{"eps_t", "eps_o", "eps_q", "state_scale",
                                              "obs_scale"};
  return names;
}

struct SearchConfig {
  SearchMethod method = SearchMethod::None;
  Index budget = 40;
  std::uint64_t seed = 0;
  double sigma0 = 0.5;
  std::vector<std::string> parameters{"eps_t", "eps_o", "eps_q"};
  std::vector<std::vector<double>> grid;  ///< log10 values, one axis per parameter
};

struct DataConfig {
  Index train_sequences = 400;  ///< includes the validation tail
  Index test_sequences = 100;
  double validation_fraction = 0.25;
  std::optional<Index> burn_in;  ///< first scored step; defaults to h
};

struct ModesConfig {
  std::vector<std::string> methods{"elto", "dmd", "hdmd", "edmd", "sdmd"};
  int harmonics = 4;
  Index hankel_delay = 30;
  std::string dictionary = "identity";  ///< "identity" or "exp"
  int dictionary_harmonics = 10;
  double retain_lo = 0.2;
  double retain_hi = 1.1;
};

struct CsvInputConfig {
  std::string path;
  double dt = 1.0;
  bool has_header = false;
  bool center = false;
  double train_fraction = 0.8;
  Index sequence_length = 0;  ///< 0 keeps each part as a single sequence
};

struct SweepConfig {
  std::vector<double> noise_values;
};

inline const std::vector<std::string>& known_mode_methods() {
  static const std::vector<std::string> m{"elto", "dmd", "hdmd", "edmd", "sdmd"};
  return m;
}

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::PendulumFilter;
  PendulumConfig pendulum;
  VdpConfig vdp;
  SlConfig sl;
  CsvInputConfig csv;
  ModelConfig model;
  SearchConfig search;
  DataConfig data;
  ModesConfig modes;
  SweepConfig sweep;
  Index trials = 1;
  std::uint64_t seed = 0;
  std::string output = "results";

  /// Noise knob varied by sweeps: pendulum n_p, VDP observation std, SL
  /// process-noise variance.
  double noise() const {
    switch (kind) {
      case ExperimentKind::PendulumFilter: return pendulum.n_p;
      case ExperimentKind::VdpModes: return vdp.obs_noise_std;
      case ExperimentKind::SlModes: return sl.eps_process;
      case ExperimentKind::CsvFilter: return 0.0;
    }
    return 0.0;
  }

  void set_noise(double v) {
    switch (kind) {
      case ExperimentKind::PendulumFilter: pendulum.n_p = v; break;
      case ExperimentKind::VdpModes: vdp.obs_noise_std = v; break;
      case ExperimentKind::SlModes: sl.eps_process = v; break;
      case ExperimentKind::CsvFilter: throw ArgumentError("csv_filter has no noise knob");
    }
  }

  void validate() const {
    require(trials >= 1, "config: trials must be >= 1");
    require(search.budget >= 1, "config: search.budget must be >= 1");
    require(model.h > 2, "config: model.h must be > 2");
    require(!model.rank || (*model.rank >= 1 && *model.rank <= model.h),
            "config: model.rank must lie in [1, h]");
    require(model.whitening_ridge >= 0, "config: model.whitening_ridge must be >= 0");
    require(model.epochs >= 0, "config: model.epochs must be >= 0");
    require(model.learning_rate >= 0, "config: model.learning_rate must be >= 0");
    require(model.eps_t > 0 && model.eps_o > 0 && model.eps_q > 0,
            "config: eps_t, eps_o, eps_q must be positive");
    require(model.koopman_eps > 0, "config: model.koopman_eps must be positive");
    require(model.max_pairs >= 0, "config: model.max_pairs must be >= 0");
    require(model.rank_threshold >= 0 && model.rank_threshold < 1,
            "config: model.rank_threshold must lie in [0, 1)");
    for (const KernelConfig* k : {&model.realization_kernel, &model.state_kernel, &model.obs_kernel})
      require(k->kind == KernelKind::Linear || (k->gamma > 0 && std::isfinite(k->gamma)),
              "config: RBF kernel gamma/scale must be positive");
    require(search.sigma0 > 0, "config: search.sigma0 must be positive");
    for (const auto& p : search.parameters) {
      const auto& names = searchable_parameters();
      require(std::find(names.begin(), names.end(), p) != names.end(),
              "config: unknown search parameter '" + p + "'");
    }
    if (search.method == SearchMethod::Grid)
      require(search.grid.size() == search.parameters.size(),
              "config: search.grid needs one axis per search parameter");
    if (search.method != SearchMethod::None)
      require(is_filter(kind), "config: search is only defined for filter experiments");
    require(data.validation_fraction > 0 && data.validation_fraction < 1,
            "config: data.validation_fraction must lie in (0, 1)");
    require(data.train_sequences >= 2 && data.test_sequences >= 1,
            "config: need >= 2 training and >= 1 test sequences");
    require(!data.burn_in || *data.burn_in >= 1, "config: data.burn_in must be >= 1");
    require(modes.harmonics >= 1, "config: modes.harmonics must be >= 1");
    require(modes.hankel_delay >= 1, "config: modes.hankel_delay must be >= 1");
    require(modes.dictionary == "identity" || modes.dictionary == "exp",
            "config: modes.dictionary must be 'identity' or 'exp'");
    require(modes.dictionary_harmonics >= 1, "config: modes.dictionary_harmonics must be >= 1");
    require(modes.retain_lo >= 0 && modes.retain_lo < modes.retain_hi,
            "config: modes retention window must satisfy 0 <= lo < hi");
    require(!modes.methods.empty(), "config: modes.methods must be nonempty");
    for (const auto& m : modes.methods) {
      const auto& known = known_mode_methods();
      require(std::find(known.begin(), known.end(), m) != known.end(),
              "config: unknown mode method '" + m + "'");
    }
    if (kind == ExperimentKind::CsvFilter) {
      require(!csv.path.empty(), "config: csv.path is required for csv_filter");
      require(csv.dt > 0, "config: csv.dt must be positive");
      require(csv.train_fraction > 0 && csv.train_fraction < 1,
              "config: csv.train_fraction must lie in (0, 1)");
    }
    switch (kind) {
      case ExperimentKind::PendulumFilter: pendulum.validate(); break;
      case ExperimentKind::VdpModes: vdp.validate(); break;
      case ExperimentKind::SlModes: sl.validate(); break;
      case ExperimentKind::CsvFilter: break;
    }
  }
};

// ---------------------------------------------------------------------------
// JSON mapping. Unknown keys are rejected so that typos do not silently fall
// back to defaults.
// ---------------------------------------------------------------------------

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ParseError(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ParseError(where_ + ": unknown key '" + k + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline KernelConfig kernel_from_json(const Json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "linear") return KernelConfig::linear();
    throw ParseError(where + ": kernel string must be 'linear'");
  }
  ObjectReader r(j, where);
  std::string kind = "rbf";
  r.get("kind", kind);
  KernelConfig k;
  if (kind == "linear") {
    k = KernelConfig::linear();
  } else if (kind == "rbf") {
    std::optional<double> gamma, scale;
    r.get_optional("gamma", gamma);
    r.get_optional("scale", scale);
    if (gamma && scale) throw ParseError(where + ": give either gamma or scale, not both");
    k = gamma ? KernelConfig::absolute(*gamma) : KernelConfig::scaled(scale.value_or(1.0));
  } else {
    throw ParseError(where + ": unknown kernel kind '" + kind + "'");
  }
  r.finish();
  return k;
}

inline Json kernel_to_json(const KernelConfig& k) {
  if (k.kind == KernelKind::Linear) return Json{{"kind", "linear"}};
  return k.median_scaled ? Json{{"kind", "rbf"}, {"scale", k.gamma}}
                         : Json{{"kind", "rbf"}, {"gamma", k.gamma}};
}

inline ReferencePolicy reference_policy(const std::string& s, const std::string& where) {
  if (s == "all") return ReferencePolicy::All;
  if (s == "last") return ReferencePolicy::Last;
  if (s == "stride") return ReferencePolicy::Stride;
  if (s == "random") return ReferencePolicy::Random;
  throw ParseError(where + ": unknown reference policy '" + s + "'");
}

inline std::string to_string(ReferencePolicy p) {
  switch (p) {
    case ReferencePolicy::All: return "all";
    case ReferencePolicy::Last: return "last";
    case ReferencePolicy::Stride: return "stride";
    case ReferencePolicy::Random: return "random";
  }
  return "?";
}

}  // namespace detail

inline ExperimentKind experiment_kind(const std::string& s) {
  if (s == "pendulum_filter") return ExperimentKind::PendulumFilter;
  if (s == "vdp_modes") return ExperimentKind::VdpModes;
  if (s == "sl_modes") return ExperimentKind::SlModes;
  if (s == "csv_filter") return ExperimentKind::CsvFilter;
  throw ParseError("config: unknown experiment kind '" + s + "'");
}

inline SearchMethod search_method(const std::string& s) {
  if (s == "none") return SearchMethod::None;
  if (s == "grid") return SearchMethod::Grid;
  if (s == "cmaes") return SearchMethod::CmaEs;
  throw ParseError("config: unknown search method '" + s + "'");
}

inline ExperimentConfig config_from_json(const Json& j) {
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader top(j, "config");
  std::string kind;
  top.get("experiment", kind);
  if (kind.empty()) throw ParseError("config: missing 'experiment'");
  c.kind = experiment_kind(kind);
  top.get("name", c.name);
  top.get("trials", c.trials);
  top.get("seed", c.seed);
  top.get("output", c.output);

  if (const Json* s = top.child("system")) {
    ObjectReader r(*s, "config.system");
    switch (c.kind) {
      case ExperimentKind::PendulumFilter: {
        auto& p = c.pendulum;
        r.get("g", p.g);
        r.get("L", p.L);
        r.get("sim_hz", p.sim_hz);
        r.get("obs_hz", p.obs_hz);
        r.get("n_p", p.n_p);
        r.get("n_o", p.n_o);
        r.get("length", p.length);
        r.get("per_step_noise", p.per_step_noise);
        break;
      }
      case ExperimentKind::VdpModes: {
        auto& v = c.vdp;
        std::vector<double> x0{v.x0(0), v.x0(1)};
        r.get("mu", v.mu);
        r.get("dt", v.dt);
        r.get("x0", x0);
        r.get("obs_noise_std", v.obs_noise_std);
        r.get("length", v.length);
        v.x0 = Eigen::Map<const Vector>(x0.data(), static_cast<Index>(x0.size()));
        break;
      }
      case ExperimentKind::SlModes: {
        auto& s2 = c.sl;
        r.get("mu", s2.mu);
        r.get("gamma", s2.gamma);
        r.get("beta", s2.beta);
        r.get("eps_process", s2.eps_process);
        r.get("dt", s2.dt);
        r.get("r0", s2.r0);
        r.get("theta0", s2.theta0);
        r.get("obs_noise_var", s2.obs_noise_var);
        r.get("length", s2.length);
        break;
      }
      case ExperimentKind::CsvFilter: {
        auto& v = c.csv;
        r.get("path", v.path);
        r.get("dt", v.dt);
        r.get("has_header", v.has_header);
        r.get("center", v.center);
        r.get("train_fraction", v.train_fraction);
        r.get("sequence_length", v.sequence_length);
        break;
      }
    }
    r.finish();
  }

  if (const Json* m = top.child("model")) {
    ObjectReader r(*m, "config.model");
    auto& mc = c.model;
    r.get("h", mc.h);
    r.get_optional("rank", mc.rank);
    r.get("rank_threshold", mc.rank_threshold);
    r.get("whitening_ridge", mc.whitening_ridge);
    r.get("epochs", mc.epochs);
    r.get("learning_rate", mc.learning_rate);
    r.get("eps_t", mc.eps_t);
    r.get("eps_o", mc.eps_o);
    r.get("eps_q", mc.eps_q);
    r.get("max_pairs", mc.max_pairs);
    r.get("koopman_eps", mc.koopman_eps);
    r.get_optional("init_samples", mc.init_samples);
    if (const Json* k = r.child("realization_kernel"))
      mc.realization_kernel = detail::kernel_from_json(*k, r.path("realization_kernel"));
    if (const Json* k = r.child("state_kernel"))
      mc.state_kernel = detail::kernel_from_json(*k, r.path("state_kernel"));
    if (const Json* k = r.child("obs_kernel"))
      mc.obs_kernel = detail::kernel_from_json(*k, r.path("obs_kernel"));
    if (const Json* ref = r.child("reference")) {
      ObjectReader rr(*ref, r.path("reference"));
      std::string policy = detail::to_string(mc.reference.policy);
      rr.get("policy", policy);
      mc.reference.policy = detail::reference_policy(policy, r.path("reference"));
      rr.get("count", mc.reference.count);
      rr.finish();
    }
    r.finish();
  }

  if (const Json* s = top.child("search")) {
    ObjectReader r(*s, "config.search");
    std::string method = to_string(c.search.method);
    r.get("method", method);
    c.search.method = search_method(method);
    r.get("budget", c.search.budget);
    r.get("seed", c.search.seed);
    r.get("sigma0", c.search.sigma0);
    r.get("parameters", c.search.parameters);
    r.get("grid", c.search.grid);
    r.finish();
  }

  if (const Json* d = top.child("data")) {
    ObjectReader r(*d, "config.data");
    r.get("train_sequences", c.data.train_sequences);
    r.get("test_sequences", c.data.test_sequences);
    r.get("validation_fraction", c.data.validation_fraction);
    r.get_optional("burn_in", c.data.burn_in);
    r.finish();
  }

  if (const Json* m = top.child("modes")) {
    ObjectReader r(*m, "config.modes");
    r.get("methods", c.modes.methods);
    r.get("harmonics", c.modes.harmonics);
    r.get("hankel_delay", c.modes.hankel_delay);
    r.get("dictionary", c.modes.dictionary);
    r.get("dictionary_harmonics", c.modes.dictionary_harmonics);
    r.get("retain_lo", c.modes.retain_lo);
    r.get("retain_hi", c.modes.retain_hi);
    r.finish();
  }

  if (const Json* s = top.child("sweep")) {
    ObjectReader r(*s, "config.sweep");
    r.get("noise_values", c.sweep.noise_values);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

/// Complete echo of a config; config_from_json(config_to_json(c)) == c.
inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["experiment"] = to_string(c.kind);
  j["name"] = c.name;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["output"] = c.output;
  switch (c.kind) {
    case ExperimentKind::PendulumFilter: {
      const auto& p = c.pendulum;
      j["system"] = Json{{"g", p.g},         {"L", p.L},     {"sim_hz", p.sim_hz},
                         {"obs_hz", p.obs_hz}, {"n_p", p.n_p}, {"n_o", p.n_o},
                         {"length", p.length}, {"per_step_noise", p.per_step_noise}};
      break;
    }
    case ExperimentKind::VdpModes: {
      const auto& v = c.vdp;
      j["system"] = Json{{"mu", v.mu},
                         {"dt", v.dt},
                         {"x0", std::vector<double>(v.x0.data(), v.x0.data() + v.x0.size())},
                         {"obs_noise_std", v.obs_noise_std},
                         {"length", v.length}};
      break;
    }
    case ExperimentKind::SlModes: {
      const auto& s = c.sl;
      j["system"] = Json{{"mu", s.mu},       {"gamma", s.gamma},
                         {"beta", s.beta},   {"eps_process", s.eps_process},
                         {"dt", s.dt},       {"r0", s.r0},
                         {"theta0", s.theta0}, {"obs_noise_var", s.obs_noise_var},
                         {"length", s.length}};
      break;
    }
    case ExperimentKind::CsvFilter: {
      const auto& v = c.csv;
      j["system"] = Json{{"path", v.path},
                         {"dt", v.dt},
                         {"has_header", v.has_header},
                         {"center", v.center},
                         {"train_fraction", v.train_fraction},
                         {"sequence_length", v.sequence_length}};
      break;
    }
  }
  const auto& m = c.model;
  Json model{{"h", m.h},
             {"rank", m.rank ? Json(*m.rank) : Json(nullptr)},
             {"rank_threshold", m.rank_threshold},
             {"whitening_ridge", m.whitening_ridge},
             {"epochs", m.epochs},
             {"learning_rate", m.learning_rate},
             {"reference", {{"policy", detail::to_string(m.reference.policy)},
                            {"count", m.reference.count}}},
             {"realization_kernel", detail::kernel_to_json(m.realization_kernel)},
             {"state_kernel", detail::kernel_to_json(m.state_kernel)},
             {"obs_kernel", detail::kernel_to_json(m.obs_kernel)},
             {"eps_t", m.eps_t},
             {"eps_o", m.eps_o},
             {"eps_q", m.eps_q},
             {"max_pairs", m.max_pairs},
             {"koopman_eps", m.koopman_eps},
             {"init_samples", m.init_samples ? Json(*m.init_samples) : Json(nullptr)}};
  j["model"] = model;
  j["search"] = Json{{"method", to_string(c.search.method)},
                     {"budget", c.search.budget},
                     {"seed", c.search.seed},
                     {"sigma0", c.search.sigma0},
                     {"parameters", c.search.parameters},
                     {"grid", c.search.grid}};
  j["data"] = Json{{"train_sequences", c.data.train_sequences},
                   {"test_sequences", c.data.test_sequences},
                   {"validation_fraction", c.data.validation_fraction},
                   {"burn_in", c.data.burn_in ? Json(*c.data.burn_in) : Json(nullptr)}};
  j["modes"] = Json{{"methods", c.modes.methods},
                    {"harmonics", c.modes.harmonics},
                    {"hankel_delay", c.modes.hankel_delay},
                    {"dictionary", c.modes.dictionary},
                    {"dictionary_harmonics", c.modes.dictionary_harmonics},
                    {"retain_lo", c.modes.retain_lo},
                    {"retain_hi", c.modes.retain_hi}};
  j["sweep"] = Json{{"noise_values", c.sweep.noise_values}};
  return j;
}

// ---------------------------------------------------------------------------
// Minimal TOML: comments, [table] / [a.b] headers, key = value with strings,
// integers, floats, booleans and single-line arrays of those (arrays may
// nest). Dotted keys, inline tables and multi-line values are not supported.
// ---------------------------------------------------------------------------

namespace detail {

class TomlLine {
 public:
  TomlLine(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  Json value() {
    skip_ws();
    if (at_end()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  void expect_end() {
    skip_ws();
    if (!at_end() && s_[pos_] != '#') fail("unexpected trailing characters");
  }

 private:
  bool at_end() const { return pos_ >= s_.size(); }
  void skip_ws() {
    while (!at_end() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("toml: " + msg, line_); }

  Json string() {
    ++pos_;
    std::string out;
    while (!at_end() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') {
        if (++pos_ >= s_.size()) break;
        const char e = s_[pos_];
        out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
      } else {
        out.push_back(s_[pos_]);
      }
      ++pos_;
    }
    if (at_end()) fail("unterminated string");
    ++pos_;
    return out;
  }

  Json array() {
    ++pos_;
    Json arr = Json::array();
    skip_ws();
    if (!at_end() && s_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      arr.push_back(value());
      skip_ws();
      if (at_end()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (!at_end() && s_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  Json number() {
    std::size_t end = pos_;
    while (end < s_.size() && std::string_view("+-0123456789.eE_").find(s_[end]) != std::string_view::npos)
      ++end;
    std::string tok;
    for (std::size_t i = pos_; i < end; ++i)
      if (s_[i] != '_') tok.push_back(s_[i]);
    if (tok.empty()) fail("unrecognised value");
    pos_ = end;
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (tok.find_first_of(".eE") == std::string::npos) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) fail("bad integer '" + tok + "'");
      return v;
    }
    double v = 0.0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail("bad number '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

inline bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Json parse_toml(std::istream& in) {
  Json root = Json::object();
  Json* table = &root;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) throw ParseError("toml: unterminated table header", line_no);
      if (!detail::trim(line.substr(close + 1)).empty() && detail::trim(line.substr(close + 1)).front() != '#')
        throw ParseError("toml: trailing characters after table header", line_no);
      std::string_view name = detail::trim(line.substr(1, close - 1));
      table = &root;
      std::size_t start = 0;
      while (true) {
        const auto dot = name.find('.', start);
        const std::string_view part =
            detail::trim(name.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
        if (!detail::bare_key(part)) throw ParseError("toml: bad table name", line_no);
        Json& next = (*table)[std::string(part)];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) throw ParseError("toml: '" + std::string(part) + "' is not a table", line_no);
        table = &next;
        if (dot == std::string_view::npos) break;
        start = dot + 1;
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("toml: expected key = value", line_no);
    const std::string key(detail::trim(line.substr(0, eq)));
    if (!detail::bare_key(key)) throw ParseError("toml: bad key '" + key + "'", line_no);
    if (table->contains(key)) throw ParseError("toml: duplicate key '" + key + "'", line_no);
    detail::TomlLine value(line.substr(eq + 1), line_no);
    (*table)[key] = value.value();
    value.expect_end();
  }
  return root;
}

inline Json parse_toml(const std::string& text) {
  std::istringstream in(text);
  return parse_toml(in);
}

/// Reads a JSON or TOML (by `.toml` extension) config file. Relative CSV
/// paths are resolved against the config file's directory.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config " + path.string());
  Json j;
  if (path.extension() == ".toml") {
    j = parse_toml(in);
  } else {
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
  }
  ExperimentConfig c = config_from_json(j);
  if (c.kind == ExperimentKind::CsvFilter && std::filesystem::path(c.csv.path).is_relative())
    c.csv.path = (path.parent_path() / c.csv.path).lexically_normal().string();
  return c;
}

}  // namespace elto::bench

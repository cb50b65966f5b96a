#pragma once

// Persistence for fitted models. Only the training samples, kernels and
// regularisation are stored; operators are recomputed on load and checked
// against stored spot values, so a file edited by hand cannot load silently.

#include "elto/csv.hpp"
#include "elto/filter.hpp"
#include "elto/modes.hpp"
#include "elto/operators.hpp"
#include "elto/realization.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

namespace elto {

using ModelJson = nlohmann::ordered_json;

struct SavedModel {
  EltoFilterModel filter;
  std::optional<RealizationModel> realization;
};

namespace detail {

inline ModelJson matrix_json(const Matrix& m) {
  ModelJson rows = ModelJson::array();
  for (Index i = 0; i < m.rows(); ++i) {
    ModelJson row = ModelJson::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return ModelJson{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Matrix matrix_from_json(const ModelJson& j, const char* what) {
  try {
    const Index r = j.at("rows").get<Index>();
    const Index c = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (r < 0 || c < 0 || static_cast<Index>(data.size()) != r)
      throw ParseError(std::string("model: bad shape for ") + what);
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i) {
      const auto& row = data.at(static_cast<std::size_t>(i));
      if (static_cast<Index>(row.size()) != c)
        throw ParseError(std::string("model: ragged matrix ") + what);
      for (Index k = 0; k < c; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + what + ": " + e.what());
  }
}

inline ModelJson kernel_json(const KernelSpec& k) {
  return ModelJson{{"kind", std::string(to_string(k.kind))}, {"gamma", k.gamma}};
}

inline KernelSpec kernel_from_json(const ModelJson& j) {
  const KernelKind kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  return kind == KernelKind::Linear ? KernelSpec::linear()
                                    : KernelSpec::rbf(j.at("gamma").get<double>());
}

/// Deterministic spread of (row, col) positions used for spot checks.
inline std::vector<std::pair<Index, Index>> spot_positions(Index rows, Index cols, int count = 5) {
  std::vector<std::pair<Index, Index>> out;
  if (rows == 0 || cols == 0) return out;
  for (int k = 0; k < count; ++k)
    out.emplace_back((static_cast<Index>(k) * 7919 + 3) % rows, (static_cast<Index>(k) * 104729 + 1) % cols);
  return out;
}

inline ModelJson spot_checks(const EltoFilterModel& m) {
  ModelJson out = ModelJson::array();
  auto add = [&](const char* name, const Matrix& a) {
    for (auto [i, j] : spot_positions(a.rows(), a.cols()))
      out.push_back(ModelJson{{"matrix", name}, {"row", i}, {"col", j}, {"value", a(i, j)}});
  };
  add("T", m.T_coord);
  add("O", m.O_coord);
  add("Q", m.process_noise);
  return out;
}

inline const Matrix& named_operator(const EltoFilterModel& m, const std::string& name) {
  if (name == "T") return m.T_coord;
  if (name == "O") return m.O_coord;
  if (name == "Q") return m.process_noise;
  throw ParseError("model: unknown spot-check matrix '" + name + "'");
}

}  // namespace detail

inline ModelJson model_to_json(const SavedModel& s) {
  const EltoFilterModel& m = s.filter;
  ModelJson j;
  j["format"] = "elto-model";
  j["version"] = 1;
  j["X_pre"] = detail::matrix_json(m.X_pre);
  j["X_post"] = detail::matrix_json(m.X_post);
  j["Y"] = detail::matrix_json(m.Y);
  j["kernel_x"] = detail::kernel_json(m.kernel_x);
  j["kernel_y"] = detail::kernel_json(m.kernel_y);
  j["eps"] = ModelJson{{"eps_t", m.eps.eps_t}, {"eps_o", m.eps.eps_o}, {"eps_q", m.eps.eps_q}};
  j["spot_checks"] = detail::spot_checks(m);
  if (s.realization) {
    const RealizationModel& r = *s.realization;
    std::vector<double> w(r.w.data(), r.w.data() + r.w.size());
    j["realization"] = ModelJson{{"kernel_y", detail::kernel_json(r.kernel_y)},
                                 {"h", r.h},
                                 {"r", r.r},
                                 {"w", w},
                                 {"reference", detail::matrix_json(r.reference)},
                                 {"B", detail::matrix_json(r.B)}};
  } else {
    j["realization"] = nullptr;
  }
  return j;
}

/// Rebuilds the operators and compares them with the stored spot values
/// (relative tolerance `tol`); throws ConsistencyError on mismatch.
inline SavedModel model_from_json(const ModelJson& j, double tol = 1e-8) {
  SavedModel s;
  try {
    if (j.at("format").get<std::string>() != "elto-model") throw ParseError("model: wrong format tag");
    if (j.at("version").get<int>() != 1) throw ParseError("model: unsupported version");
    const Regularization eps{j.at("eps").at("eps_t").get<double>(), j.at("eps").at("eps_o").get<double>(),
                             j.at("eps").at("eps_q").get<double>()};
    s.filter = fit_operators(detail::matrix_from_json(j.at("X_pre"), "X_pre"),
                             detail::matrix_from_json(j.at("X_post"), "X_post"),
                             detail::matrix_from_json(j.at("Y"), "Y"),
                             detail::kernel_from_json(j.at("kernel_x")),
                             detail::kernel_from_json(j.at("kernel_y")), eps);
    for (const auto& spot : j.at("spot_checks")) {
      const Matrix& a = detail::named_operator(s.filter, spot.at("matrix").get<std::string>());
      const Index r = spot.at("row").get<Index>();
      const Index c = spot.at("col").get<Index>();
      if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols())
        throw ConsistencyError("model: spot check outside the operator");
      const double stored = spot.at("value").get<double>();
      const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
      if (!(std::abs(a(r, c) - stored) <= tol * scale))
        throw ConsistencyError("model: recomputed operators disagree with stored spot check");
    }
    const auto& rj = j.at("realization");
    if (!rj.is_null()) {
      RealizationModel r;
      r.kernel_y = detail::kernel_from_json(rj.at("kernel_y"));
      r.h = rj.at("h").get<Index>();
      r.r = rj.at("r").get<Index>();
      const auto w = rj.at("w").get<std::vector<double>>();
      r.w = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
      r.reference = detail::matrix_from_json(rj.at("reference"), "reference");
      r.B = detail::matrix_from_json(rj.at("B"), "B");
      if (r.reference.cols() != r.w.size() || r.B.rows() != r.r || r.B.cols() != r.h)
        throw ConsistencyError("model: realization shapes are inconsistent");
      if (r.B.rows() != s.filter.state_dim())
        throw ConsistencyError("model: realization rank differs from the state dimension");
      s.realization = std::move(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  return s;
}

/// `.bin` selects CBOR, anything else JSON.
inline void save_model(const SavedModel& s, const std::filesystem::path& path) {
  const ModelJson j = model_to_json(s);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path.string());
  if (path.extension() == ".bin") {
    const auto bytes = ModelJson::to_cbor(j);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    out << j.dump(1) << '\n';
  }
}

inline SavedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open model " + path.string());
  ModelJson j;
  try {
    j = path.extension() == ".bin" ? ModelJson::from_cbor(in) : ModelJson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

inline ModelJson modes_to_json(const ModeDecomposition& d) {
  auto pairs = [](const std::vector<Complex>& v) {
    ModelJson a = ModelJson::array();
    for (const Complex& z : v) a.push_back(ModelJson::array({z.real(), z.imag()}));
    return a;
  };
  return ModelJson{{"method", std::string(to_string(d.method))},
                   {"dt", d.dt},
                   {"rank", d.rank},
                   {"eigvals_discrete", pairs(d.eigvals_discrete)},
                   {"eigvals_continuous", pairs(d.eigvals_continuous)},
                   {"defective", d.defective},
                   {"rank_deficient", d.rank_deficient}};
}

/// One row per step: t, eta_1..q, innovation_norm, diag(Sigma)_1..q.
inline void write_filter_trace(std::ostream& out, const std::vector<FilterOutput>& trace) {
  if (trace.empty()) return;
  const Index q = trace.front().eta.size();
  out << 't';
  for (Index i = 1; i <= q; ++i) out << ",eta_" << i;
  out << ",innovation_norm";
  for (Index i = 1; i <= q; ++i) out << ",sigma_" << i;
  out << '\n';
  for (const auto& o : trace) {
    out << o.t;
    for (Index i = 0; i < q; ++i) out << ',' << format_double(o.eta(i));
    out << ',' << (o.observed ? format_double(o.innovation_norm) : std::string("nan"));
    for (Index i = 0; i < q; ++i) out << ',' << format_double(o.Sigma(i, i));
    out << '\n';
  }
}

}  // namespace elto

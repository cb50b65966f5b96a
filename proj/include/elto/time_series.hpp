#pragma once

#include "elto/common.hpp"

#include <map>
#include <string>

namespace elto {

/// Uniformly sampled multivariate series. `data` is (T+1) x q with one time
/// step per row. `latent` optionally carries the simulator's hidden state
/// (same row count) for diagnostics; it never feeds the learning code.
struct TimeSeries {
  Matrix data;
  double dt = 1.0;
  std::uint64_t seed = 0;
  std::string system_tag;
  std::map<std::string, double> noise_meta;
  Matrix latent;

  Index length() const { return data.rows(); }
  Index last_index() const { return data.rows() - 1; }
  Index dim() const { return data.cols(); }

  /// Samples as columns (q x (T+1)), the layout the kernel code expects.
  Matrix samples() const { return data.transpose(); }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ArgumentError("TimeSeries: dt must be positive");
    if (!data.allFinite()) throw ArgumentError("TimeSeries: non-finite entries");
  }
};

}  // namespace elto

#pragma once

#include "elto/common.hpp"
#include "elto/time_series.hpp"

#include <span>
#include <vector>

namespace elto::bench {

/// Mean of squared entrywise differences.
inline double mse(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw ArgumentError("mse: shape mismatch " + std::to_string(pred.rows()) + "x" +
                        std::to_string(pred.cols()) + " vs " + std::to_string(truth.rows()) + "x" +
                        std::to_string(truth.cols()));
  if (pred.size() == 0) throw ArgumentError("mse: empty input");
  return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

/// Running mean and unbiased standard deviation of a sample.
struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(values.size() - 1));
  }
  return s;
}

/// One-step predictions of a set of series stacked as columns: rows t >= burn_in.
struct PredictionSet {
  Matrix pred;  ///< q x count
  Matrix truth;
};

/// Last-observation-carried-forward predictions (y_{t-1} predicts y_t) for t >= burn_in.
inline PredictionSet locf_predictions(std::span<const TimeSeries> set, Index burn_in) {
  if (burn_in < 1) throw ArgumentError("locf_predictions: burn_in must be >= 1");
  Index count = 0;
  for (const auto& s : set) count += std::max<Index>(0, s.length() - burn_in);
  const Index q = set.empty() ? 0 : set.front().dim();
  PredictionSet out{Matrix(q, count), Matrix(q, count)};
  Index c = 0;
  for (const auto& s : set)
    for (Index t = burn_in; t < s.length(); ++t, ++c) {
      out.pred.col(c) = s.data.row(t - 1).transpose();
      out.truth.col(c) = s.data.row(t).transpose();
    }
  return out;
}

}  // namespace elto::bench

#pragma once

// Metric-fidelity evaluation: per-feature PLCC/SROCC over a rate ladder,
// cross-feature averages, and rounded PLCC histograms.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfqa/feature_store.hpp"
#include "cfqa/metrics.hpp"

namespace cfqa {

inline constexpr std::size_t kDefaultSeriesLength = 10;
inline constexpr std::size_t kMinSeriesLength = 3;

/// Pearson correlation; empty when either series has zero variance.
/// Throws ShapeError for mismatched lengths or fewer than three points.
std::optional<double> plcc(std::span<const double> x, std::span<const double> y);

/// Spearman correlation with average ranks for ties.
std::optional<double> srocc(std::span<const double> x, std::span<const double> y);

/// 1-based average ranks (ties share the mean of their positions).
std::vector<double> average_ranks(std::span<const double> values);

struct Series {
  std::string feature_id;
  std::string codec;
  Task task = Task::Synthetic;
  Metric metric = Metric::MSE;
  std::vector<double> scores;
  std::vector<double> labels;
};

struct SeriesCorrelation {
  std::string feature_id;
  std::string codec;
  Task task = Task::Synthetic;
  Metric metric = Metric::MSE;
  std::optional<double> plcc;
  std::optional<double> srocc;
};

/// Signed correlations between scores and labels; no sign rectification.
SeriesCorrelation evaluate_series(const Series& s);

struct AggregateReport {
  std::string codec;
  Task task = Task::Synthetic;
  Metric metric = Metric::MSE;
  std::optional<double> mean_plcc;
  std::optional<double> mean_srocc;
  std::size_t feature_count = 0;
  /// Rows whose plcc or srocc was undefined.
  std::size_t undefined_count = 0;
};

/// Means of the defined correlations per (codec, task, metric), rows sorted
/// by codec name, then task, then metric.
std::vector<AggregateReport> aggregate(std::span<const SeriesCorrelation> rows);

inline constexpr std::size_t kHistogramBins = 21;

struct PlccHistogram {
  /// counts[i] is the bin centred on -1.0 + 0.1 * i.
  std::array<std::size_t, kHistogramBins> counts{};
  std::size_t undefined = 0;

  static double bin_center(std::size_t i) { return -1.0 + 0.1 * static_cast<double>(i); }
  std::size_t defined() const;
};

/// Rounds each defined value to the nearest tenth (half away from zero).
PlccHistogram plcc_histogram(std::span<const std::optional<double>> values);

/// Histogram bin index for one value in [-1, 1].
std::size_t histogram_bin(double value);

}  // namespace cfqa

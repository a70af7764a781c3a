#include "cfqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "cfqa/errors.hpp"

namespace cfqa {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ShapeError("correlation inputs differ in length (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  if (x.size() < kMinSeriesLength)
    throw ShapeError("correlation needs at least " + std::to_string(kMinSeriesLength) + " points");
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (is_constant(x) || is_constant(y)) return std::nullopt;
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

}  // namespace

std::optional<double> plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValueError("correlation input is not finite");
  }
  return pearson(x, y);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 (0-based) share the mean 1-based rank.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> srocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) throw ValueError("correlation input is NaN");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

SeriesCorrelation evaluate_series(const Series& s) {
  return SeriesCorrelation{s.feature_id, s.codec, s.task, s.metric, plcc(s.scores, s.labels),
                           srocc(s.scores, s.labels)};
}

std::vector<AggregateReport> aggregate(std::span<const SeriesCorrelation> rows) {
  using Key = std::tuple<std::string, Task, Metric>;
  std::map<Key, std::vector<const SeriesCorrelation*>> groups;
  for (const auto& r : rows) groups[{r.codec, r.task, r.metric}].push_back(&r);

  std::vector<AggregateReport> reports;
  for (auto& [key, members] : groups) {
    // Fixed summation order keeps the means independent of input order.
    std::sort(members.begin(), members.end(), [](const SeriesCorrelation* a, const SeriesCorrelation* b) {
      return std::tie(a->feature_id, a->plcc, a->srocc) < std::tie(b->feature_id, b->plcc, b->srocc);
    });
    AggregateReport rep{std::get<0>(key), std::get<1>(key), std::get<2>(key), {}, {}, members.size(), 0};
    double plcc_sum = 0.0, srocc_sum = 0.0;
    std::size_t plcc_n = 0, srocc_n = 0;
    for (const auto* m : members) {
      if (m->plcc) {
        plcc_sum += *m->plcc;
        ++plcc_n;
      }
      if (m->srocc) {
        srocc_sum += *m->srocc;
        ++srocc_n;
      }
      if (!m->plcc || !m->srocc) ++rep.undefined_count;
    }
    if (plcc_n) rep.mean_plcc = plcc_sum / static_cast<double>(plcc_n);
    if (srocc_n) rep.mean_srocc = srocc_sum / static_cast<double>(srocc_n);
    reports.push_back(std::move(rep));
  }
  return reports;
}

std::size_t PlccHistogram::defined() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t histogram_bin(double value) {
  if (!(value >= -1.0 && value <= 1.0)) throw RangeError("PLCC value outside [-1, 1]");
  const long tenths = std::lround(value * 10.0);  // half away from zero
  return static_cast<std::size_t>(std::clamp(tenths, -10L, 10L) + 10);
}

PlccHistogram plcc_histogram(std::span<const std::optional<double>> values) {
  PlccHistogram h;
  for (const auto& v : values) {
    if (!v) {
      ++h.undefined;
      continue;
    }
    ++h.counts[histogram_bin(*v)];
  }
  return h;
}

}  // namespace cfqa

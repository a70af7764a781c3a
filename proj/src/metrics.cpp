#include "cfqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfqa/errors.hpp"

namespace cfqa {

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::MSE: return "MSE";
    case Metric::Cosine: return "Cosine";
    case Metric::CKA: return "CKA";
  }
  return "MSE";
}

Metric parse_metric(std::string_view name) {
  if (name == "MSE") return Metric::MSE;
  if (name == "Cosine") return Metric::Cosine;
  if (name == "CKA") return Metric::CKA;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

Orientation orientation_of(Metric metric) {
  return metric == Metric::MSE ? Orientation::LowerIsBetter : Orientation::HigherIsBetter;
}

namespace {

void require_same_shape(const FeatureTensor& f, const FeatureTensor& g) {
  if (f.shape() != g.shape()) throw ShapeError("metric inputs have different shapes");
}

Eigen::MatrixXd centered_view(const FeatureTensor& t) {
  Eigen::MatrixXd x = flatten_2d(t).cast<double>();
  x.rowwise() -= x.colwise().mean();
  return x;
}

void check_cka_inputs(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) throw ShapeError("CKA inputs need the same number of samples");
  if (x.rows() < 2) throw ShapeError("CKA needs at least two token rows");
}

Eigen::MatrixXd center_columns(const Eigen::MatrixXd& x) {
  return x.rowwise() - x.colwise().mean();
}

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

QualityScore mse(const FeatureTensor& f, const FeatureTensor& g) {
  require_same_shape(f, g);
  const auto a = f.values();
  const auto b = g.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return {Metric::MSE, sum / static_cast<double>(a.size())};
}

QualityScore cosine(const FeatureTensor& f, const FeatureTensor& g, CosineOptions options) {
  require_same_shape(f, g);
  if (!options.per_token) {
    const auto a = f.values();
    const auto b = g.values();
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a[i];
      const double y = b[i];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw DegenerateError("cosine similarity of a zero-norm tensor");
    return {Metric::Cosine, std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0)};
  }
  const Eigen::MatrixXd x = flatten_2d(f).cast<double>();
  const Eigen::MatrixXd y = flatten_2d(g).cast<double>();
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double na = x.row(r).norm();
    const double nb = y.row(r).norm();
    if (na == 0.0 || nb == 0.0) throw DegenerateError("per-token cosine of a zero-norm token");
    total += std::clamp(x.row(r).dot(y.row(r)) / (na * nb), -1.0, 1.0);
  }
  return {Metric::Cosine, total / static_cast<double>(x.rows())};
}

double linear_cka_feature_space(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  check_cka_inputs(x, y);
  const Eigen::MatrixXd xc = center_columns(x);
  const Eigen::MatrixXd yc = center_columns(y);
  const double cross = (yc.transpose() * xc).squaredNorm();
  const double self_x = (xc.transpose() * xc).norm();
  const double self_y = (yc.transpose() * yc).norm();
  if (self_x == 0.0 || self_y == 0.0) throw DegenerateError("CKA of an all-constant feature");
  return clamp_unit(cross / (self_x * self_y));
}

double linear_cka_gram(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  check_cka_inputs(x, y);
  const Eigen::MatrixXd xc = center_columns(x);
  const Eigen::MatrixXd yc = center_columns(y);
  const Eigen::MatrixXd k = xc * xc.transpose();
  const Eigen::MatrixXd l = yc * yc.transpose();
  const double norm_k = k.norm();
  const double norm_l = l.norm();
  if (norm_k == 0.0 || norm_l == 0.0) throw DegenerateError("CKA of an all-constant feature");
  return clamp_unit(k.cwiseProduct(l).sum() / (norm_k * norm_l));
}

QualityScore linear_cka(const FeatureTensor& f, const FeatureTensor& g) {
  require_same_shape(f, g);
  const Eigen::MatrixXd x = centered_view(f);
  const Eigen::MatrixXd y = centered_view(g);
  const double value = x.rows() <= x.cols() ? linear_cka_gram(x, y) : linear_cka_feature_space(x, y);
  return {Metric::CKA, value};
}

QualityScore score(Metric metric, const FeatureTensor& f, const FeatureTensor& g) {
  try {
    switch (metric) {
      case Metric::MSE: return mse(f, g);
      case Metric::Cosine: return cosine(f, g);
      case Metric::CKA: return linear_cka(f, g);
    }
  } catch (const DegenerateError&) {
  }
  return {metric, std::nullopt};
}

std::vector<QualityScore> score_all(const FeatureTensor& f, const FeatureTensor& g) {
  require_same_shape(f, g);
  std::vector<QualityScore> scores;
  for (Metric m : kAllMetrics) scores.push_back(score(m, f, g));
  return scores;
}

}  // namespace cfqa

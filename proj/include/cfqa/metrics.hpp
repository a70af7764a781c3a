#pragma once

// Baseline feature quality metrics q = Q(f, f_hat): MSE, cosine similarity
// and linear CKA.

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cfqa/feature_store.hpp"

namespace cfqa {

enum class Metric { MSE, Cosine, CKA };
enum class Orientation { LowerIsBetter, HigherIsBetter };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);
Orientation orientation_of(Metric metric);

inline constexpr Metric kAllMetrics[] = {Metric::MSE, Metric::Cosine, Metric::CKA};

struct QualityScore {
  Metric metric = Metric::MSE;
  std::optional<double> value;  // empty = Undefined

  bool defined() const noexcept { return value.has_value(); }
  Orientation orientation() const noexcept { return orientation_of(metric); }
  friend bool operator==(const QualityScore&, const QualityScore&) = default;
};

QualityScore mse(const FeatureTensor& f, const FeatureTensor& g);

struct CosineOptions {
  /// Average the cosine of matching token rows instead of comparing the
  /// fully flattened tensors.
  bool per_token = false;
};

/// Throws DegenerateError when either input has zero norm.
QualityScore cosine(const FeatureTensor& f, const FeatureTensor& g, CosineOptions options = {});

/// Linear CKA over the flatten_2d views (tokens are samples, channels are
/// dimensions). Picks the Gram or feature-space formulation by shape.
QualityScore linear_cka(const FeatureTensor& f, const FeatureTensor& g);

/// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) on column-centered views.
double linear_cka_feature_space(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);
/// <K_c, L_c>_F / (||K_c||_F ||L_c||_F) with K = X X^T on centered views.
double linear_cka_gram(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// Computes one metric, converting DegenerateError into an Undefined score.
QualityScore score(Metric metric, const FeatureTensor& f, const FeatureTensor& g);

/// [MSE, Cosine, CKA]; degenerate metrics appear as Undefined entries.
std::vector<QualityScore> score_all(const FeatureTensor& f, const FeatureTensor& g);

}  // namespace cfqa

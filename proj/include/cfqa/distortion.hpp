#pragma once

// True semantic distortion labels derived from task-head outputs: rank of the
// ground-truth class, mIoU difference, and depth RMSE difference.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cfqa/feature_store.hpp"

namespace cfqa {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr int kVocClasses = 21;

struct ClsLogits {
  std::vector<double> values;
  std::size_t gt_label = 0;
};

using LabelMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DepthMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SegMask {
  LabelMatrix labels;
  int num_classes = kVocClasses;
};

struct DepthMap {
  DepthMatrix values;
  BoolMatrix valid;  // same shape as values

  static DepthMap all_valid(DepthMatrix values);
};

/// How a delta is formed: against the original prediction (Consistency) or
/// as an accuracy difference against a ground-truth annotation.
enum class DistortionMode { Consistency, Annotation, Injected };

std::string_view to_string(DistortionMode mode);
DistortionMode parse_distortion_mode(std::string_view name);

struct DistortionLabel {
  Task task = Task::Synthetic;
  DistortionMode mode = DistortionMode::Consistency;
  double value = 0.0;
};

/// 1-based rank of gt_label under a descending sort; ties go to the lower index.
DistortionLabel cls_rank(const ClsLogits& logits);

/// Mean IoU over classes present in either mask, ignoring 255 pixels in either.
double miou(const SegMask& a, const SegMask& b);

DistortionLabel delta_miou(const SegMask& pred_orig, const SegMask& pred_comp,
                           const std::optional<SegMask>& annotation = std::nullopt,
                           DistortionMode mode = DistortionMode::Consistency);

/// RMSE over jointly valid pixels.
double rmse(const DepthMap& a, const DepthMap& b);

DistortionLabel delta_rmse(const DepthMap& pred_orig, const DepthMap& pred_comp,
                           const std::optional<DepthMap>& annotation = std::nullopt,
                           DistortionMode mode = DistortionMode::Consistency);

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

/// One CSV row: gt_label, then the logits.
ClsLogits read_logits_csv(const std::filesystem::path& path);
void write_logits_csv(const ClsLogits& logits, const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255).
LabelMatrix read_pgm(const std::filesystem::path& path);
void write_pgm(const LabelMatrix& labels, const std::filesystem::path& path);

SegMask read_seg_mask(const std::filesystem::path& path, int num_classes = kVocClasses);

/// Rank-2 CFT depth map plus an optional PGM validity mask (nonzero = valid).
DepthMap read_depth_map(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& mask_path = std::nullopt);
void write_depth_map(const DepthMap& depth, const std::filesystem::path& path,
                     const std::optional<std::filesystem::path>& mask_path = std::nullopt);

}  // namespace cfqa

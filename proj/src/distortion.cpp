#include "cfqa/distortion.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "cfqa/errors.hpp"
#include "cfqa/text_io.hpp"

namespace cfqa {

std::string_view to_string(DistortionMode mode) {
  switch (mode) {
    case DistortionMode::Consistency: return "consistency";
    case DistortionMode::Annotation: return "annotation";
    case DistortionMode::Injected: return "injected";
  }
  return "consistency";
}

DistortionMode parse_distortion_mode(std::string_view name) {
  if (name == "consistency") return DistortionMode::Consistency;
  if (name == "annotation") return DistortionMode::Annotation;
  if (name == "injected") return DistortionMode::Injected;
  throw ConfigError("unknown distortion mode '" + std::string(name) + "'");
}

DepthMap DepthMap::all_valid(DepthMatrix values) {
  BoolMatrix valid = BoolMatrix::Constant(values.rows(), values.cols(), true);
  return DepthMap{std::move(values), std::move(valid)};
}

DistortionLabel cls_rank(const ClsLogits& logits) {
  if (logits.values.empty()) throw ValueError("logits are empty");
  if (logits.gt_label >= logits.values.size())
    throw ValueError("gt_label " + std::to_string(logits.gt_label) + " outside " +
                     std::to_string(logits.values.size()) + " classes");
  for (double v : logits.values) {
    if (std::isnan(v)) throw ValueError("NaN logit");
  }
  const double gt = logits.values[logits.gt_label];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < logits.values.size(); ++j) {
    const double v = logits.values[j];
    if (v > gt || (v == gt && j < logits.gt_label)) ++ahead;
  }
  return {Task::Cls, DistortionMode::Consistency, static_cast<double>(ahead + 1)};
}

namespace {

void check_mask(const SegMask& m) {
  for (Eigen::Index i = 0; i < m.labels.size(); ++i) {
    const int v = m.labels.data()[i];
    if (v != kIgnoreLabel && v >= m.num_classes)
      throw ValueError("mask label " + std::to_string(v) + " outside [0, " +
                       std::to_string(m.num_classes) + ")");
  }
}

void require_same_mask_shape(const SegMask& a, const SegMask& b) {
  if (a.labels.rows() != b.labels.rows() || a.labels.cols() != b.labels.cols())
    throw ShapeError("segmentation masks differ in size");
  if (a.num_classes != b.num_classes) throw ShapeError("segmentation masks differ in class count");
}

void check_depth(const DepthMap& d) {
  if (d.valid.rows() != d.values.rows() || d.valid.cols() != d.values.cols())
    throw ShapeError("depth validity mask does not match the depth map");
  for (Eigen::Index i = 0; i < d.values.size(); ++i) {
    if (d.valid.data()[i] && !std::isfinite(d.values.data()[i]))
      throw ValueError("non-finite depth at a valid pixel");
  }
}

}  // namespace

double miou(const SegMask& a, const SegMask& b) {
  require_same_mask_shape(a, b);
  check_mask(a);
  check_mask(b);
  const auto classes = static_cast<std::size_t>(a.num_classes);
  std::vector<std::uint64_t> inter(classes, 0), uni(classes, 0);
  for (Eigen::Index i = 0; i < a.labels.size(); ++i) {
    const auto x = a.labels.data()[i];
    const auto y = b.labels.data()[i];
    if (x == kIgnoreLabel || y == kIgnoreLabel) continue;
    if (x == y) {
      ++inter[x];
      ++uni[x];
    } else {
      ++uni[x];
      ++uni[y];
    }
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (uni[c] == 0) continue;
    sum += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    ++present;
  }
  // Nothing but ignore pixels: the masks agree everywhere they are compared.
  return present == 0 ? 1.0 : sum / static_cast<double>(present);
}

DistortionLabel delta_miou(const SegMask& pred_orig, const SegMask& pred_comp,
                           const std::optional<SegMask>& annotation, DistortionMode mode) {
  switch (mode) {
    case DistortionMode::Consistency:
      return {Task::Seg, mode, 1.0 - miou(pred_comp, pred_orig)};
    case DistortionMode::Annotation:
      if (!annotation) throw ConfigError("annotation mode requires an annotation mask");
      require_same_mask_shape(pred_orig, pred_comp);
      return {Task::Seg, mode, miou(pred_orig, *annotation) - miou(pred_comp, *annotation)};
    case DistortionMode::Injected:
      break;
  }
  throw ConfigError("injected labels are not derived from predictions");
}

double rmse(const DepthMap& a, const DepthMap& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols())
    throw ShapeError("depth maps differ in size");
  check_depth(a);
  check_depth(b);
  double sum = 0.0;
  std::uint64_t n = 0;
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    if (!a.valid.data()[i] || !b.valid.data()[i]) continue;
    const double d = a.values.data()[i] - b.values.data()[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw DegenerateError("depth maps share no valid pixel");
  return std::sqrt(sum / static_cast<double>(n));
}

DistortionLabel delta_rmse(const DepthMap& pred_orig, const DepthMap& pred_comp,
                           const std::optional<DepthMap>& annotation, DistortionMode mode) {
  switch (mode) {
    case DistortionMode::Consistency:
      return {Task::Dpt, mode, rmse(pred_comp, pred_orig)};
    case DistortionMode::Annotation:
      if (!annotation) throw ConfigError("annotation mode requires an annotation depth map");
      if (pred_orig.values.rows() != pred_comp.values.rows() ||
          pred_orig.values.cols() != pred_comp.values.cols())
        throw ShapeError("depth predictions differ in size");
      return {Task::Dpt, mode, rmse(pred_comp, *annotation) - rmse(pred_orig, *annotation)};
    case DistortionMode::Injected:
      break;
  }
  throw ConfigError("injected labels are not derived from predictions");
}

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

ClsLogits read_logits_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) break;
  }
  const auto fields = split_csv_line(line);
  if (fields.size() < 2) throw FormatError(path.string() + ": expected gt_label followed by logits");
  ClsLogits logits;
  logits.gt_label = static_cast<std::size_t>(parse_uint(fields[0]));
  for (std::size_t i = 1; i < fields.size(); ++i) logits.values.push_back(parse_double(fields[i]));
  if (logits.gt_label >= logits.values.size()) throw ValueError(path.string() + ": gt_label out of range");
  return logits;
}

void write_logits_csv(const ClsLogits& logits, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << logits.gt_label;
  for (double v : logits.values) out << ',' << format_double(v);
  out << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::string next_pgm_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

}  // namespace

LabelMatrix read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (next_pgm_token(in) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  const auto width = parse_uint(next_pgm_token(in));
  const auto height = parse_uint(next_pgm_token(in));
  const auto maxval = parse_uint(next_pgm_token(in));
  if (maxval == 0 || maxval > 255) throw FormatError(path.string() + ": PGM maxval must be in 1..255");
  LabelMatrix labels(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width));
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (in.gcount() != static_cast<std::streamsize>(labels.size()))
    throw CorruptError(path.string() + ": PGM raster shorter than its header declares");
  return labels;
}

void write_pgm(const LabelMatrix& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << labels.cols() << ' ' << labels.rows() << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

SegMask read_seg_mask(const std::filesystem::path& path, int num_classes) {
  SegMask mask{read_pgm(path), num_classes};
  check_mask(mask);
  return mask;
}

DepthMap read_depth_map(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& mask_path) {
  const auto t = load_tensor(path, Task::Synthetic);
  if (t.rank() != 2) throw ShapeError(path.string() + ": depth map must be a rank-2 tensor");
  const auto rows = static_cast<Eigen::Index>(t.shape()[0]);
  const auto cols = static_cast<Eigen::Index>(t.shape()[1]);
  DepthMatrix values = Eigen::Map<const Matrix>(t.values().data(), rows, cols).cast<double>();
  DepthMap depth = DepthMap::all_valid(std::move(values));
  if (mask_path) {
    const LabelMatrix mask = read_pgm(*mask_path);
    if (mask.rows() != rows || mask.cols() != cols)
      throw ShapeError(mask_path->string() + ": validity mask does not match the depth map");
    depth.valid = mask.array() != 0;
  }
  return depth;
}

void write_depth_map(const DepthMap& depth, const std::filesystem::path& path,
                     const std::optional<std::filesystem::path>& mask_path) {
  const Matrix values = depth.values.cast<float>();
  save_tensor(restore_shape(values, Shape{static_cast<std::uint64_t>(values.rows()),
                                          static_cast<std::uint64_t>(values.cols())},
                            path.stem().string(), Task::Synthetic),
              path);
  if (mask_path) {
    LabelMatrix mask = depth.valid.cast<std::uint8_t>();
    write_pgm(mask, *mask_path);
  }
}

}  // namespace cfqa

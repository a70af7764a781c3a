#pragma once

// Codec simulators producing controlled compression distortion and rate
// estimates: 10-bit uniform quantization, an 8x8 block-DCT intra codec driven
// by a QP ladder, and a random-orthonormal latent codec standing in for
// learned (hyperprior-style) coding.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "cfqa/feature_store.hpp"

namespace cfqa {

enum class CodecKind { UniformOnly, BlockTransform, LatentSurrogate };

std::string_view to_string(CodecKind kind);
CodecKind parse_codec_kind(std::string_view name);

inline constexpr int kQuantLevels = 1024;
inline constexpr int kMaxCode = kQuantLevels - 1;
/// Fixed per-bitstream header charged by every simulated codec.
inline constexpr std::uint64_t kHeaderBits = 64;
/// Bits per feature point of an uncompressed float32 feature.
inline constexpr double kUncompressedBpfp = 32.0;

struct QuantGrid {
  float v_min = 0.0f;
  float v_max = 0.0f;
  int levels = kQuantLevels;

  bool degenerate() const noexcept { return v_min == v_max; }
  friend bool operator==(const QuantGrid&, const QuantGrid&) = default;
};

using CodeMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// q = round((m - v_min) / (v_max - v_min) * 1023), grid from the matrix extrema.
/// A constant matrix maps to all-zero codes with grid (c, c).
std::pair<CodeMatrix, QuantGrid> uniform_quantize(const Matrix& m);

/// Inverse mapping; throws RangeError for codes outside [0, 1023].
Matrix dequantize(const CodeMatrix& q, const QuantGrid& grid);

struct CodecConfig {
  CodecKind kind = CodecKind::UniformOnly;
  int qp = 0;                // BlockTransform: even, 2..20
  int lambda_index = 0;      // LatentSurrogate: 0..9
  std::uint64_t seed = 0;    // LatentSurrogate transform seed

  static CodecConfig uniform() { return {CodecKind::UniformOnly, 0, 0, 0}; }
  static CodecConfig block(int qp) { return {CodecKind::BlockTransform, qp, 0, 0}; }
  static CodecConfig latent(int lambda_index, std::uint64_t seed) {
    return {CodecKind::LatentSurrogate, 0, lambda_index, seed};
  }

  /// Throws ConfigError if the operating point is outside the kind's range.
  void validate() const;
  /// Short human-readable operating point, e.g. "qp=12" or "lambda=3".
  std::string label() const;
  /// Relative quantization strength: Qstep for BlockTransform, 2^(lambda/2)
  /// for LatentSurrogate, 1 for UniformOnly. Larger means coarser.
  double strength() const;

  friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};

/// The ten-point ladder for a kind, ordered highest rate first
/// (QP 2..20, lambda index 0..9). UniformOnly yields a single point.
std::vector<CodecConfig> default_ladder(CodecKind kind, std::uint64_t seed = 0);

/// Qstep = 2^((qp - 4) / 6).
double qp_to_step(int qp);

struct CompressedRecord {
  std::string feature_id;
  CodecConfig config;
  std::uint64_t bitstream_bits = 0;
  double bpfp = 0.0;
  FeatureTensor reconstruction;
};

/// Zeroth-order empirical entropy in bits per symbol.
double empirical_entropy(std::span<const std::int32_t> symbols);

/// ceil(H * count) + header, the rate charged for a block of symbols.
std::uint64_t entropy_coded_bits(std::span<const std::int32_t> symbols, std::uint64_t header_bits);

CompressedRecord uniform_encode(const Matrix& m);

/// 8x8 type-II DCT intra codec on the 10-bit code plane.
CompressedRecord block_transform_encode(const Matrix& m, int qp);

/// Seeded Haar-random orthonormal matrix (QR of a Gaussian matrix with sign fix).
class LatentTransform {
 public:
  static LatentTransform generate(Eigen::Index dim, std::uint64_t seed);

  const Eigen::MatrixXd& matrix() const noexcept { return basis_; }
  Eigen::Index dim() const noexcept { return basis_.rows(); }
  std::uint64_t seed() const noexcept { return seed_; }
  /// max |Q Q^T - I|
  double orthonormality_error() const;

 private:
  LatentTransform(Eigen::MatrixXd basis, std::uint64_t seed) : basis_(std::move(basis)), seed_(seed) {}
  Eigen::MatrixXd basis_;
  std::uint64_t seed_;
};

CompressedRecord latent_surrogate_encode(const Matrix& m, int lambda_index, std::uint64_t seed);
CompressedRecord latent_surrogate_encode(const Matrix& m, int lambda_index,
                                         const LatentTransform& transform);

/// Dispatches on config.kind and caches latent transforms per (dim, seed).
/// Safe to share between threads.
class Encoder {
 public:
  CompressedRecord encode(const Matrix& m, const CodecConfig& config) const;
  std::shared_ptr<const LatentTransform> transform(Eigen::Index dim, std::uint64_t seed) const;

 private:
  mutable std::mutex mutex_;
  mutable std::map<std::pair<Eigen::Index, std::uint64_t>, std::shared_ptr<const LatentTransform>>
      transforms_;
};

/// Encodes one feature at one operating point; the reconstruction keeps the
/// feature's id, shape and task and bpfp is charged per feature element.
CompressedRecord encode_feature(const FeatureTensor& t, const CodecConfig& config, const Encoder& encoder);

/// Encodes a feature at every ladder point; reconstructions keep the
/// original shape and task, records carry the feature id.
std::vector<CompressedRecord> rate_ladder(const FeatureTensor& t, std::span<const CodecConfig> points,
                                          const Encoder& encoder);
std::vector<CompressedRecord> rate_ladder(const FeatureTensor& t, std::span<const CodecConfig> points);

nlohmann::ordered_json config_to_json(const CodecConfig& config);
CodecConfig config_from_json(const nlohmann::json& j);

/// Sidecar document describing a record whose reconstruction lives at `reconstruction_path`.
nlohmann::ordered_json record_sidecar(const CompressedRecord& record, const std::string& reconstruction_path);

}  // namespace cfqa

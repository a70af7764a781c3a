#include "cfqa/codec_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "cfqa/errors.hpp"
#include "cfqa/random.hpp"

namespace cfqa {

std::string_view to_string(CodecKind kind) {
  switch (kind) {
    case CodecKind::UniformOnly: return "UniformOnly";
    case CodecKind::BlockTransform: return "BlockTransform";
    case CodecKind::LatentSurrogate: return "LatentSurrogate";
  }
  return "UniformOnly";
}

CodecKind parse_codec_kind(std::string_view name) {
  if (name == "UniformOnly") return CodecKind::UniformOnly;
  if (name == "BlockTransform") return CodecKind::BlockTransform;
  if (name == "LatentSurrogate") return CodecKind::LatentSurrogate;
  throw ConfigError("unknown codec kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Uniform 10-bit quantization
// ---------------------------------------------------------------------------

std::pair<CodeMatrix, QuantGrid> uniform_quantize(const Matrix& m) {
  if (m.size() == 0) throw ShapeError("cannot quantize an empty matrix");
  if (!m.allFinite()) throw ValueError("cannot quantize non-finite values");
  QuantGrid grid{m.minCoeff(), m.maxCoeff(), kQuantLevels};
  CodeMatrix q = CodeMatrix::Zero(m.rows(), m.cols());
  if (grid.degenerate()) return {std::move(q), grid};
  const double lo = grid.v_min;
  const double scale = kMaxCode / (static_cast<double>(grid.v_max) - lo);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double code = std::round((static_cast<double>(m.data()[i]) - lo) * scale);
    q.data()[i] = static_cast<std::int32_t>(std::clamp(code, 0.0, static_cast<double>(kMaxCode)));
  }
  return {std::move(q), grid};
}

Matrix dequantize(const CodeMatrix& q, const QuantGrid& grid) {
  if (q.size() > 0 && (q.minCoeff() < 0 || q.maxCoeff() > kMaxCode))
    throw RangeError("quantization code outside [0, 1023]");
  if (grid.v_min > grid.v_max) throw RangeError("quantization grid has v_min > v_max");
  Matrix m(q.rows(), q.cols());
  if (grid.degenerate()) {
    m.setConstant(grid.v_min);
    return m;
  }
  const double lo = grid.v_min;
  const double span = static_cast<double>(grid.v_max) - lo;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    m.data()[i] = static_cast<float>(lo + q.data()[i] / static_cast<double>(kMaxCode) * span);
  return m;
}

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

void CodecConfig::validate() const {
  switch (kind) {
    case CodecKind::UniformOnly:
      return;
    case CodecKind::BlockTransform:
      if (qp < 2 || qp > 20 || qp % 2 != 0)
        throw ConfigError("BlockTransform qp must be an even value in 2..20, got " + std::to_string(qp));
      return;
    case CodecKind::LatentSurrogate:
      if (lambda_index < 0 || lambda_index > 9)
        throw ConfigError("LatentSurrogate lambda_index must be in 0..9, got " +
                          std::to_string(lambda_index));
      return;
  }
}

std::string CodecConfig::label() const {
  switch (kind) {
    case CodecKind::UniformOnly: return "uniform";
    case CodecKind::BlockTransform: return "qp=" + std::to_string(qp);
    case CodecKind::LatentSurrogate: return "lambda=" + std::to_string(lambda_index);
  }
  return {};
}

double qp_to_step(int qp) { return std::exp2((qp - 4) / 6.0); }

double CodecConfig::strength() const {
  switch (kind) {
    case CodecKind::UniformOnly: return 1.0;
    case CodecKind::BlockTransform: return qp_to_step(qp);
    case CodecKind::LatentSurrogate: return std::exp2(lambda_index / 2.0);
  }
  return 1.0;
}

std::vector<CodecConfig> default_ladder(CodecKind kind, std::uint64_t seed) {
  std::vector<CodecConfig> ladder;
  switch (kind) {
    case CodecKind::UniformOnly:
      ladder.push_back(CodecConfig::uniform());
      break;
    case CodecKind::BlockTransform:
      for (int qp = 2; qp <= 20; qp += 2) ladder.push_back(CodecConfig::block(qp));
      break;
    case CodecKind::LatentSurrogate:
      for (int i = 0; i <= 9; ++i) ladder.push_back(CodecConfig::latent(i, seed));
      break;
  }
  return ladder;
}

// ---------------------------------------------------------------------------
// Rate estimation
// ---------------------------------------------------------------------------

namespace {

// Counts symbol occurrences in ascending symbol order so the entropy sum is
// evaluated in a fixed order.
std::vector<std::uint64_t> symbol_counts(std::span<const std::int32_t> symbols) {
  if (symbols.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(symbols.begin(), symbols.end());
  const std::int64_t lo = *lo_it;
  const std::int64_t range = static_cast<std::int64_t>(*hi_it) - lo + 1;
  std::vector<std::uint64_t> counts;
  if (range <= (std::int64_t{1} << 24)) {
    std::vector<std::uint64_t> dense(static_cast<std::size_t>(range), 0);
    for (auto s : symbols) ++dense[static_cast<std::size_t>(s - lo)];
    for (auto c : dense) {
      if (c) counts.push_back(c);
    }
    return counts;
  }
  std::vector<std::int32_t> sorted(symbols.begin(), symbols.end());
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      counts.push_back(run);
      run = 1;
    }
  }
  return counts;
}

}  // namespace

double empirical_entropy(std::span<const std::int32_t> symbols) {
  if (symbols.empty()) return 0.0;
  const auto n = static_cast<double>(symbols.size());
  double h = 0.0;
  for (auto c : symbol_counts(symbols)) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

std::uint64_t entropy_coded_bits(std::span<const std::int32_t> symbols, std::uint64_t header_bits) {
  const double payload = empirical_entropy(symbols) * static_cast<double>(symbols.size());
  return header_bits + static_cast<std::uint64_t>(std::ceil(payload));
}

namespace {

FeatureTensor as_tensor(const Matrix& m) {
  return FeatureTensor({}, Task::Synthetic,
                       Shape{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                       std::vector<float>(m.data(), m.data() + m.size()));
}

CompressedRecord make_record(const CodecConfig& config, std::uint64_t bits, const Matrix& recon) {
  const double bpfp = static_cast<double>(bits) / static_cast<double>(recon.size());
  return CompressedRecord{{}, config, bits, bpfp, as_tensor(recon)};
}

}  // namespace

CompressedRecord uniform_encode(const Matrix& m) {
  auto [codes, grid] = uniform_quantize(m);
  const auto bits =
      entropy_coded_bits(std::span<const std::int32_t>(codes.data(), static_cast<std::size_t>(codes.size())),
                         kHeaderBits);
  return make_record(CodecConfig::uniform(), bits, dequantize(codes, grid));
}

// ---------------------------------------------------------------------------
// Block transform codec
// ---------------------------------------------------------------------------

namespace {

constexpr int kBlock = 8;
using Block = Eigen::Matrix<double, kBlock, kBlock, Eigen::RowMajor>;

Block dct_basis() {
  Block c;
  for (int k = 0; k < kBlock; ++k) {
    const double norm = k == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
    for (int n = 0; n < kBlock; ++n)
      c(k, n) = norm * std::cos(std::numbers::pi * (2 * n + 1) * k / (2.0 * kBlock));
  }
  return c;
}

// Round half away from zero.
double round_half_away(double x) { return std::round(x); }

}  // namespace

CompressedRecord block_transform_encode(const Matrix& m, int qp) {
  const auto config = CodecConfig::block(qp);
  config.validate();
  auto [codes, grid] = uniform_quantize(m);

  const Eigen::Index rows = codes.rows();
  const Eigen::Index cols = codes.cols();
  const Eigen::Index padded_rows = (rows + kBlock - 1) / kBlock * kBlock;
  const Eigen::Index padded_cols = (cols + kBlock - 1) / kBlock * kBlock;

  // Edge replication into the padded plane.
  Eigen::MatrixXd plane(padded_rows, padded_cols);
  for (Eigen::Index r = 0; r < padded_rows; ++r) {
    const Eigen::Index sr = std::min(r, rows - 1);
    for (Eigen::Index c = 0; c < padded_cols; ++c)
      plane(r, c) = codes(sr, std::min(c, cols - 1));
  }

  static const Block basis = dct_basis();
  const double step = qp_to_step(qp);
  std::vector<std::int32_t> levels;
  levels.reserve(static_cast<std::size_t>(padded_rows * padded_cols));
  CodeMatrix recon_codes(rows, cols);

  for (Eigen::Index br = 0; br < padded_rows; br += kBlock) {
    for (Eigen::Index bc = 0; bc < padded_cols; bc += kBlock) {
      const Block samples = plane.block<kBlock, kBlock>(br, bc);
      const Block coeffs = basis * samples * basis.transpose();
      Block dequantized;
      for (int i = 0; i < kBlock * kBlock; ++i) {
        const double level = round_half_away(coeffs.data()[i] / step);
        levels.push_back(static_cast<std::int32_t>(level));
        dequantized.data()[i] = level * step;
      }
      const Block rebuilt = basis.transpose() * dequantized * basis;
      for (int i = 0; i < kBlock; ++i) {
        for (int j = 0; j < kBlock; ++j) {
          const Eigen::Index r = br + i;
          const Eigen::Index c = bc + j;
          if (r >= rows || c >= cols) continue;
          const double v = std::clamp(round_half_away(rebuilt(i, j)), 0.0, static_cast<double>(kMaxCode));
          recon_codes(r, c) = static_cast<std::int32_t>(v);
        }
      }
    }
  }

  const auto bits = entropy_coded_bits(levels, kHeaderBits);
  return make_record(config, bits, dequantize(recon_codes, grid));
}

// ---------------------------------------------------------------------------
// Latent surrogate codec
// ---------------------------------------------------------------------------

LatentTransform LatentTransform::generate(Eigen::Index dim, std::uint64_t seed) {
  if (dim <= 0) throw ShapeError("latent transform dimension must be positive");
  Rng rng(seed ^ 0xa0761d6478bd642fULL);
  Eigen::MatrixXd gaussian(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c) {
    for (Eigen::Index r = 0; r < dim; ++r) gaussian(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ();
  const auto& r = qr.matrixQR();
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (r(k, k) < 0) q.col(k) = -q.col(k);
  }
  return LatentTransform(std::move(q), seed);
}

double LatentTransform::orthonormality_error() const {
  const Eigen::MatrixXd gram = basis_ * basis_.transpose();
  return (gram - Eigen::MatrixXd::Identity(dim(), dim())).cwiseAbs().maxCoeff();
}

CompressedRecord latent_surrogate_encode(const Matrix& m, int lambda_index, std::uint64_t seed) {
  CodecConfig::latent(lambda_index, seed).validate();
  return latent_surrogate_encode(m, lambda_index, LatentTransform::generate(m.cols(), seed));
}

namespace {

/// Per-row base step 0.01 * std(row); flat rows fall back to the matrix-wide
/// std, and a constant matrix to an absolute step of 0.01.
Eigen::VectorXd row_base_steps(const Eigen::MatrixXd& x) {
  const double global_mean = x.mean();
  const double global_std = std::sqrt((x.array() - global_mean).square().mean());
  Eigen::VectorXd steps(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double sd = std::sqrt((x.row(r).array() - mean).square().mean());
    const double spread = sd > 0 ? sd : (global_std > 0 ? global_std : 1.0);
    steps(r) = 0.01 * spread;
  }
  return steps;
}

}  // namespace

CompressedRecord latent_surrogate_encode(const Matrix& m, int lambda_index,
                                         const LatentTransform& transform) {
  const auto config = CodecConfig::latent(lambda_index, transform.seed());
  config.validate();
  if (m.size() == 0) throw ShapeError("cannot encode an empty matrix");
  if (transform.dim() != m.cols())
    throw ShapeError("latent transform dimension " + std::to_string(transform.dim()) +
                     " does not match " + std::to_string(m.cols()) + " channels");

  const Eigen::MatrixXd x = m.cast<double>();
  const Eigen::VectorXd steps = row_base_steps(x) * std::exp2(lambda_index / 2.0);
  Eigen::MatrixXd latent = x * transform.matrix();

  std::vector<std::int32_t> levels;
  levels.reserve(static_cast<std::size_t>(latent.size()));
  for (Eigen::Index r = 0; r < latent.rows(); ++r) {
    for (Eigen::Index c = 0; c < latent.cols(); ++c) {
      const double level = round_half_away(latent(r, c) / steps(r));
      levels.push_back(static_cast<std::int32_t>(level));
      latent(r, c) = level * steps(r);
    }
  }
  const Matrix recon = (latent * transform.matrix().transpose()).cast<float>();

  // Header plus one float32 step per row as side information.
  const std::uint64_t side_bits = kHeaderBits + 32 * static_cast<std::uint64_t>(m.rows());
  return make_record(config, entropy_coded_bits(levels, side_bits), recon);
}

// ---------------------------------------------------------------------------
// Dispatch and ladders
// ---------------------------------------------------------------------------

std::shared_ptr<const LatentTransform> Encoder::transform(Eigen::Index dim, std::uint64_t seed) const {
  std::lock_guard lock(mutex_);
  auto& slot = transforms_[{dim, seed}];
  if (!slot) slot = std::make_shared<const LatentTransform>(LatentTransform::generate(dim, seed));
  return slot;
}

CompressedRecord Encoder::encode(const Matrix& m, const CodecConfig& config) const {
  config.validate();
  switch (config.kind) {
    case CodecKind::UniformOnly:
      return uniform_encode(m);
    case CodecKind::BlockTransform:
      return block_transform_encode(m, config.qp);
    case CodecKind::LatentSurrogate:
      return latent_surrogate_encode(m, config.lambda_index, *transform(m.cols(), config.seed));
  }
  throw ConfigError("unhandled codec kind");
}

CompressedRecord encode_feature(const FeatureTensor& t, const CodecConfig& config, const Encoder& encoder) {
  auto rec = encoder.encode(flatten_2d(t), config);
  const Matrix recon = flatten_2d(rec.reconstruction);
  return CompressedRecord{t.id(), config, rec.bitstream_bits,
                          static_cast<double>(rec.bitstream_bits) / static_cast<double>(t.size()),
                          restore_shape(recon, t.shape(), t.id(), t.task())};
}

std::vector<CompressedRecord> rate_ladder(const FeatureTensor& t, std::span<const CodecConfig> points,
                                          const Encoder& encoder) {
  if (points.empty()) throw ConfigError("rate ladder needs at least one point");
  for (const auto& p : points) {
    if (p.kind != points.front().kind) throw ConfigError("rate ladder mixes codec kinds");
    p.validate();
  }
  std::vector<CompressedRecord> records;
  records.reserve(points.size());
  for (const auto& p : points) records.push_back(encode_feature(t, p, encoder));
  return records;
}

std::vector<CompressedRecord> rate_ladder(const FeatureTensor& t, std::span<const CodecConfig> points) {
  return rate_ladder(t, points, Encoder{});
}

nlohmann::ordered_json config_to_json(const CodecConfig& config) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(config.kind));
  if (config.kind == CodecKind::BlockTransform) j["qp"] = config.qp;
  if (config.kind == CodecKind::LatentSurrogate) {
    j["lambda_index"] = config.lambda_index;
    j["seed"] = config.seed;
  }
  return j;
}

CodecConfig config_from_json(const nlohmann::json& j) {
  try {
    CodecConfig c;
    c.kind = parse_codec_kind(j.at("kind").get<std::string>());
    c.qp = j.value("qp", 0);
    c.lambda_index = j.value("lambda_index", 0);
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed codec config: ") + ex.what());
  }
}

nlohmann::ordered_json record_sidecar(const CompressedRecord& record, const std::string& reconstruction_path) {
  nlohmann::ordered_json j;
  j["feature_id"] = record.feature_id;
  const auto config = config_to_json(record.config);
  for (const auto& [key, value] : config.items()) j[key] = value;
  j["bitstream_bits"] = record.bitstream_bits;
  j["bpfp"] = record.bpfp;
  j["reconstruction"] = reconstruction_path;
  return j;
}

}  // namespace cfqa

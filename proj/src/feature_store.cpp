#include "cfqa/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "cfqa/errors.hpp"
#include "cfqa/random.hpp"

namespace cfqa {

static_assert(std::numeric_limits<float>::is_iec559, "float32 payloads require IEEE-754");

std::string_view to_string(Task task) {
  switch (task) {
    case Task::Cls: return "Cls";
    case Task::Seg: return "Seg";
    case Task::Dpt: return "Dpt";
    case Task::Synthetic: return "Synthetic";
  }
  return "Synthetic";
}

Task parse_task(std::string_view name) {
  if (name == "Cls") return Task::Cls;
  if (name == "Seg") return Task::Seg;
  if (name == "Dpt") return Task::Dpt;
  if (name == "Synthetic") return Task::Synthetic;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::uint64_t element_count(const Shape& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t default_token_axis(const Shape& shape) {
  return shape.size() >= 2 ? shape.size() - 2 : 0;
}

}  // namespace

void check_task_shape(Task task, const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  if (std::any_of(shape.begin(), shape.end(), [](auto d) { return d == 0; }))
    throw ShapeError("tensor dims must be positive, got " + shape_string(shape));
  bool ok = true;
  switch (task) {
    case Task::Cls:
      ok = shape == Shape{257, kFeatureChannels};
      break;
    case Task::Seg:
      ok = shape == Shape{2, 1370, kFeatureChannels};
      break;
    case Task::Dpt:
      ok = shape.size() == 4 && shape[0] == 2 && shape[1] == 4 && shape[3] == kFeatureChannels;
      break;
    case Task::Synthetic:
      break;
  }
  if (!ok) {
    throw ShapeError("shape " + shape_string(shape) + " is not valid for task " +
                     std::string(to_string(task)));
  }
}

Task infer_task(const Shape& shape) {
  for (Task t : {Task::Cls, Task::Seg, Task::Dpt}) {
    try {
      check_task_shape(t, shape);
      return t;
    } catch (const ShapeError&) {
    }
  }
  return Task::Synthetic;
}

FeatureTensor::FeatureTensor(std::string id, Task task, Shape shape, std::vector<float> values)
    : FeatureTensor(std::move(id), task, shape, std::move(values), default_token_axis(shape)) {}

FeatureTensor::FeatureTensor(std::string id, Task task, Shape shape, std::vector<float> values,
                             std::size_t token_axis)
    : id_(std::move(id)),
      task_(task),
      shape_(std::move(shape)),
      values_(std::move(values)),
      token_axis_(token_axis) {
  check_task_shape(task_, shape_);
  if (element_count(shape_) != values_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " holds " +
                     std::to_string(element_count(shape_)) + " elements but payload has " +
                     std::to_string(values_.size()));
  }
  if (token_axis_ >= shape_.size()) throw ShapeError("token_axis out of range");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      throw ValueError("non-finite value at flat index " + std::to_string(i));
  }
}

FeatureTensor FeatureTensor::with_id(std::string id) const {
  FeatureTensor copy = *this;
  copy.id_ = std::move(id);
  return copy;
}

bool operator==(const FeatureTensor& a, const FeatureTensor& b) {
  return a.id_ == b.id_ && a.task_ == b.task_ && a.shape_ == b.shape_ &&
         a.token_axis_ == b.token_axis_ && a.values_.size() == b.values_.size() &&
         std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// CFT codec
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'F', 'T', '1'};

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32_le(std::uint8_t* dst, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) dst[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

float get_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

std::vector<std::uint8_t> encode_cft(const FeatureTensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(kCftHeaderBytes + 8 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kDtypeFloat32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  out.resize(kCftHeaderBytes, 0);
  for (auto d : t.shape()) put_u64_le(out, d);
  const std::size_t payload_at = out.size();
  out.resize(payload_at + 4 * t.size());
  const auto values = t.values();
  for (std::size_t i = 0; i < values.size(); ++i) put_f32_le(out.data() + payload_at + 4 * i, values[i]);
  return out;
}

FeatureTensor decode_cft(std::span<const std::uint8_t> bytes, std::string id,
                         std::optional<Task> task) {
  if (bytes.size() < kCftHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("missing CFT1 magic");
  if (bytes[4] != kDtypeFloat32)
    throw FormatError("unsupported dtype code " + std::to_string(bytes[4]));
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("CFT rank must be positive");
  for (std::size_t i = 6; i < kCftHeaderBytes; ++i) {
    if (bytes[i] != 0) throw FormatError("reserved header bytes must be zero");
  }
  const std::size_t dims_end = kCftHeaderBytes + 8 * rank;
  if (bytes.size() < dims_end) throw CorruptError("file truncated inside the dims block");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u64_le(bytes.data() + kCftHeaderBytes + 8 * i);
    if (shape[i] != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / shape[i])
      throw CorruptError("declared shape overflows");
    count *= shape[i];
  }
  const std::uint64_t payload = bytes.size() - dims_end;
  if (payload != 4 * count) {
    throw CorruptError("payload holds " + std::to_string(payload) + " bytes, shape " +
                       shape_string(shape) + " requires " + std::to_string(4 * count));
  }
  std::vector<float> values(count);
  for (std::uint64_t i = 0; i < count; ++i) values[i] = get_f32_le(bytes.data() + dims_end + 4 * i);
  const Task resolved = task.value_or(infer_task(shape));
  return FeatureTensor(std::move(id), resolved, std::move(shape), std::move(values));
}

void save_tensor(const FeatureTensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_cft(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

FeatureTensor load_tensor(const std::filesystem::path& path, std::optional<Task> task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_cft(bytes, path.stem().string(), task);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t payload_checksum(std::span<const float> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float f : values) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string format_checksum(std::uint64_t checksum) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kHex[checksum & 0xf];
    checksum >>= 4;
  }
  return s;
}

std::uint64_t parse_checksum(std::string_view text) {
  if (text.size() != 16) throw FormatError("checksum must be 16 hex digits");
  std::uint64_t v = 0;
  for (char c : text) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
    else throw FormatError("invalid hex digit in checksum");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Shape management
// ---------------------------------------------------------------------------

Matrix flatten_2d(const FeatureTensor& t) {
  if (t.rank() < 2) throw ShapeError("flatten_2d requires rank >= 2");
  const auto cols = static_cast<Eigen::Index>(t.shape().back());
  const auto rows = static_cast<Eigen::Index>(t.size() / t.shape().back());
  return Eigen::Map<const Matrix>(t.values().data(), rows, cols);
}

FeatureTensor restore_shape(const Matrix& m, const Shape& shape, std::string id,
                            std::optional<Task> task) {
  if (element_count(shape) != static_cast<std::uint64_t>(m.size())) {
    throw ShapeError("cannot restore " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " matrix to shape " + shape_string(shape));
  }
  std::vector<float> values(m.data(), m.data() + m.size());
  return FeatureTensor(std::move(id), task.value_or(infer_task(shape)), shape, std::move(values));
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json entry_to_json(const ManifestEntry& e) {
  return nlohmann::ordered_json{{"feature_id", e.feature_id},
                        {"task", std::string(to_string(e.task))},
                        {"source_sample", e.source_sample},
                        {"split_point", e.split_point},
                        {"file_path", e.file_path},
                        {"checksum", format_checksum(e.checksum)}};
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  try {
    e.feature_id = j.at("feature_id").get<std::string>();
    e.task = parse_task(j.at("task").get<std::string>());
    e.source_sample = j.value("source_sample", std::string{});
    e.split_point = j.value("split_point", std::string{});
    e.file_path = j.at("file_path").get<std::string>();
    e.checksum = parse_checksum(j.at("checksum").get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed manifest entry: ") + ex.what());
  }
  return e;
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& ex) {
    throw FormatError("manifest is not valid JSON: " + std::string(ex.what()));
  }
  if (!doc.is_array()) throw FormatError("manifest must be a JSON array");
  Manifest m;
  m.root = path.parent_path();
  for (const auto& item : doc) m.entries.push_back(entry_from_json(item));
  return m;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& e : entries) doc.push_back(entry_to_json(e));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

FeatureTensor load_entry(const Manifest& manifest, const ManifestEntry& entry) {
  auto t = load_tensor(manifest.root / entry.file_path).with_id(entry.feature_id);
  check_task_shape(entry.task, t.shape());
  if (payload_checksum(t.values()) != entry.checksum)
    throw CorruptError("checksum mismatch for " + entry.feature_id);
  return FeatureTensor(entry.feature_id, entry.task, t.shape(),
                       std::vector<float>(t.values().begin(), t.values().end()));
}

std::vector<ManifestIssue> validate_manifest(const Manifest& manifest) {
  std::vector<ManifestIssue> issues;
  for (const auto& entry : manifest.entries) {
    const auto file = manifest.root / entry.file_path;
    if (!std::filesystem::exists(file)) {
      issues.push_back({entry.feature_id, "missing file " + entry.file_path});
      continue;
    }
    try {
      load_entry(manifest, entry);
    } catch (const Error& ex) {
      issues.push_back({entry.feature_id, ex.what()});
    }
  }
  return issues;
}

ManifestEntry make_entry(const FeatureTensor& t, std::string file_path, std::string source_sample,
                         std::string split_point) {
  return ManifestEntry{t.id(),
                       t.task(),
                       std::move(source_sample),
                       std::move(split_point),
                       std::move(file_path),
                       payload_checksum(t.values())};
}

// ---------------------------------------------------------------------------
// Synthetic features
// ---------------------------------------------------------------------------

Shape default_shape(Task task) {
  switch (task) {
    case Task::Cls: return {257, kFeatureChannels};
    case Task::Seg: return {2, 1370, kFeatureChannels};
    case Task::Dpt: return {2, 4, 161, kFeatureChannels};
    case Task::Synthetic: return {64, kFeatureChannels};
  }
  return {64, kFeatureChannels};
}

namespace {

std::vector<float> mixture_rows(std::uint64_t rows, std::uint64_t cols, std::uint64_t stream,
                                const SynthParams& params) {
  Rng rng(stream);
  const auto k = static_cast<std::size_t>(std::max(params.clusters, 1));
  std::vector<double> means(k * cols);
  for (auto& v : means) v = params.mean_scale * rng.normal();
  std::vector<float> values(rows * cols);
  for (std::uint64_t r = 0; r < rows; ++r) {
    const auto c = static_cast<std::size_t>(rng.below(k));
    const double* mean = means.data() + c * cols;
    float* row = values.data() + r * cols;
    for (std::uint64_t j = 0; j < cols; ++j)
      row[j] = static_cast<float>(mean[j] + params.cluster_std * rng.normal());
  }
  return values;
}

}  // namespace

FeatureTensor synth_feature(Task task, std::uint64_t seed) {
  const Shape shape = default_shape(task);
  const std::uint64_t cols = shape.back();
  const std::uint64_t rows = element_count(shape) / cols;
  const std::uint64_t stream = mix_seed(seed) ^ (static_cast<std::uint64_t>(task) + 1) * 0x632be59bd9b4e019ULL;
  auto values = mixture_rows(rows, cols, stream, SynthParams{});
  std::string id = std::string(to_string(task)) + "-" + std::to_string(seed);
  return FeatureTensor(std::move(id), task, shape, std::move(values));
}

FeatureTensor synth_feature(const Shape& shape, std::uint64_t seed, const SynthParams& params) {
  check_task_shape(Task::Synthetic, shape);
  const std::uint64_t cols = shape.back();
  const std::uint64_t rows = element_count(shape) / cols;
  auto values = mixture_rows(rows, cols, mix_seed(seed) ^ 0x5bd1e995ULL, params);
  return FeatureTensor("Synthetic-" + std::to_string(seed), Task::Synthetic, shape, std::move(values));
}

}  // namespace cfqa

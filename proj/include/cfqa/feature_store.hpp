#pragma once

// Feature tensors, the CFT on-disk format, manifests and synthetic features.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace cfqa {

enum class Task { Cls, Seg, Dpt, Synthetic };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

using Shape = std::vector<std::uint64_t>;

/// Row-major float matrix, the 2D view every codec and metric operates on.
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Channel width of DINOv2 ViT-g features.
inline constexpr std::uint64_t kFeatureChannels = 1536;

/// An original or reconstructed feature. Immutable once constructed.
///
/// The constructor enforces: product(shape) == values.size(), every value
/// finite, and the per-task shape rule (Cls [257,1536], Seg [2,1370,1536],
/// Dpt [2,4,T,1536] for any T > 0, Synthetic anything of rank >= 1).
class FeatureTensor {
 public:
  FeatureTensor(std::string id, Task task, Shape shape, std::vector<float> values);
  FeatureTensor(std::string id, Task task, Shape shape, std::vector<float> values,
                std::size_t token_axis);

  const std::string& id() const noexcept { return id_; }
  Task task() const noexcept { return task_; }
  const Shape& shape() const noexcept { return shape_; }
  std::span<const float> values() const noexcept { return values_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  /// Axis whose entries are treated as samples by CKA.
  std::size_t token_axis() const noexcept { return token_axis_; }

  FeatureTensor with_id(std::string id) const;

  /// Bitwise equality of id, task, shape and payload.
  friend bool operator==(const FeatureTensor& a, const FeatureTensor& b);

 private:
  std::string id_;
  Task task_;
  Shape shape_;
  std::vector<float> values_;
  std::size_t token_axis_;
};

/// Throws ShapeError if `shape` is not admissible for `task`.
void check_task_shape(Task task, const Shape& shape);

std::uint64_t element_count(const Shape& shape);

// ---------------------------------------------------------------------------
// CFT file format
//
//   bytes 0-3   magic "CFT1"
//   byte  4     dtype code (0x01 = float32 little-endian)
//   byte  5     rank r
//   bytes 6-15  reserved, zero
//   then r little-endian u64 dims, then the row-major payload.
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kDtypeFloat32 = 0x01;
inline constexpr std::size_t kCftHeaderBytes = 16;

std::vector<std::uint8_t> encode_cft(const FeatureTensor& t);

/// Decodes CFT bytes. The task is inferred from the shape when not given.
FeatureTensor decode_cft(std::span<const std::uint8_t> bytes, std::string id,
                         std::optional<Task> task = std::nullopt);

/// Infers the task whose shape rule the shape satisfies; Synthetic otherwise.
Task infer_task(const Shape& shape);

void save_tensor(const FeatureTensor& t, const std::filesystem::path& path);

/// Loads a CFT file. The tensor id defaults to the file stem.
FeatureTensor load_tensor(const std::filesystem::path& path,
                          std::optional<Task> task = std::nullopt);

/// 64-bit FNV-1a over the little-endian float32 payload bytes.
std::uint64_t payload_checksum(std::span<const float> values);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::string format_checksum(std::uint64_t checksum);
std::uint64_t parse_checksum(std::string_view text);

// ---------------------------------------------------------------------------
// Shape management
// ---------------------------------------------------------------------------

/// Collapses all leading axes; the last axis stays the channel axis.
Matrix flatten_2d(const FeatureTensor& t);

FeatureTensor restore_shape(const Matrix& m, const Shape& shape, std::string id = {},
                            std::optional<Task> task = std::nullopt);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string feature_id;
  Task task = Task::Synthetic;
  std::string source_sample;
  std::string split_point;
  std::string file_path;  // relative to the manifest's directory
  std::uint64_t checksum = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::filesystem::path root;  // directory that file_path entries are relative to
  std::vector<ManifestEntry> entries;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

struct ManifestIssue {
  std::string feature_id;
  std::string problem;
};

/// Checks that every file exists, decodes, has a shape matching its task and
/// a matching checksum. Issues are reported in manifest order.
std::vector<ManifestIssue> validate_manifest(const Manifest& manifest);

/// Loads the tensor of one entry and verifies shape and checksum.
FeatureTensor load_entry(const Manifest& manifest, const ManifestEntry& entry);

/// Builds the manifest entry for a tensor already written at `file_path`.
ManifestEntry make_entry(const FeatureTensor& t, std::string file_path,
                         std::string source_sample = {}, std::string split_point = {});

// ---------------------------------------------------------------------------
// Synthetic features
// ---------------------------------------------------------------------------

struct SynthParams {
  int clusters = 8;
  double mean_scale = 1.0;
  double cluster_std = 0.1;
};

/// Canonical shape used for synthetic features of a task (Dpt uses T = 161).
Shape default_shape(Task task);

/// Token rows drawn from a mixture of Gaussian clusters; deterministic per (task, seed).
FeatureTensor synth_feature(Task task, std::uint64_t seed);

/// Same generator with an explicit shape, tagged as Synthetic.
FeatureTensor synth_feature(const Shape& shape, std::uint64_t seed, const SynthParams& params = {});

}  // namespace cfqa

#pragma once

// End-to-end driver: generate or ingest features, compress them along a rate
// ladder, score reconstructions, derive distortion labels, evaluate metric
// fidelity, and simulate quality-gated transmission. Every stage reads and
// writes plain files under one output directory so stages can be rerun
// independently.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfqa/codec_sim.hpp"
#include "cfqa/distortion.hpp"
#include "cfqa/evaluation.hpp"
#include "cfqa/feature_store.hpp"
#include "cfqa/link_sim.hpp"
#include "cfqa/metrics.hpp"

namespace cfqa {

struct SyntheticSpec {
  Task task = Task::Synthetic;
  std::size_t count = 10;
  std::uint64_t seed = 0;
};

struct RunConfig {
  // Exactly one input source.
  std::optional<std::filesystem::path> manifest;
  std::optional<SyntheticSpec> synthetic;

  CodecKind codec = CodecKind::BlockTransform;
  /// Empty means the kind's default ten-point ladder.
  std::vector<CodecConfig> ladder;
  std::uint64_t codec_seed = 0;

  std::vector<Metric> metrics{Metric::MSE, Metric::Cosine, Metric::CKA};

  DistortionMode mode = DistortionMode::Injected;
  /// Prediction directory for consistency/annotation labels.
  std::optional<std::filesystem::path> predictions;

  std::filesystem::path output = "cfqa-out";
  /// 0 = auto; CFQA_THREADS caps this.
  unsigned threads = 0;

  std::optional<GatePolicy> policy;

  /// Ladder after defaults are applied.
  std::vector<CodecConfig> resolved_ladder() const;
  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

/// Reads a JSON run configuration; keys mirror the CLI flags.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Worker count after applying the CFQA_THREADS cap.
unsigned effective_threads(unsigned requested);

namespace files {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kRecords = "records.csv";
inline constexpr const char* kRateTable = "rate_table.csv";
inline constexpr const char* kScores = "scores.csv";
inline constexpr const char* kLabels = "labels.csv";
inline constexpr const char* kCorrelations = "correlations.csv";
inline constexpr const char* kTable = "table4.csv";
inline constexpr const char* kHistogram = "histogram.csv";
inline constexpr const char* kTraces = "traces.csv";
inline constexpr const char* kSessions = "sessions.csv";
inline constexpr const char* kSummary = "summary.csv";
}  // namespace files

struct CompressSummary {
  std::size_t features = 0;
  std::size_t records = 0;
};

/// Writes reconstructions with JSON sidecars, records.csv and rate_table.csv
/// (first row: the uncompressed float32 reference at 32 BPFP).
CompressSummary cmd_compress(const RunConfig& config);

/// Scores every record in records.csv against its original into scores.csv.
std::size_t cmd_score(const RunConfig& config);

/// Writes labels.csv from injected strengths or prediction files.
std::size_t cmd_label(const RunConfig& config);

struct EvaluateSummary {
  std::size_t series = 0;
  std::vector<AggregateReport> table;
};

/// Joins scores.csv and labels.csv; writes correlations, table4 and histogram CSVs.
/// Throws JoinError listing orphan keys when the two files do not pair up.
EvaluateSummary cmd_evaluate(const RunConfig& config);

/// Runs the gate policy over every input feature; writes traces, sessions and summary CSVs.
CorpusSummary cmd_simulate(const RunConfig& config);

/// compress, score, label and evaluate in one go.
EvaluateSummary cmd_report(const RunConfig& config);

/// CLI entry point; returns the process exit code.
///   0 success, 1 unexpected failure, 2 configuration or I/O error, 3 join failure.
int run_cli(int argc, const char* const* argv);

}  // namespace cfqa

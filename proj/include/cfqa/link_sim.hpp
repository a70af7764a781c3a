#pragma once

// Edge-cloud transmission simulator: the edge scores each compressed feature
// against its local original and either transmits the bitstream or re-encodes
// at the next (higher-rate) ladder point.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfqa/codec_sim.hpp"
#include "cfqa/metrics.hpp"

namespace cfqa {

enum class Decision { Transmit, ReEncode };

std::string_view to_string(Decision d);

struct GatePolicy {
  Metric metric = Metric::Cosine;
  double threshold = 0.0;
  /// Lowest bitrate first.
  std::vector<CodecConfig> ladder;
  /// Cap on re-encodes; the attempt reached at the cap is transmitted.
  /// Unset means the ladder length is the only bound.
  std::optional<std::size_t> max_reencodes;

  /// Throws ConfigError for an empty or mixed-kind ladder.
  void validate() const;
};

/// Transmit iff the score passes under its orientation (>= for similarity,
/// <= for MSE). Undefined scores never pass.
Decision gate(const QualityScore& q, double threshold);

struct Attempt {
  CodecConfig config;
  std::uint64_t bitstream_bits = 0;
  std::optional<double> quality;
  Decision decision = Decision::ReEncode;
};

struct LinkTrace {
  std::string feature_id;
  std::vector<Attempt> attempts;
  std::uint64_t transmitted_bits = 0;
  std::optional<double> final_quality;
  std::size_t reencode_count = 0;
  /// True when the last attempt was sent without passing the gate.
  bool forced = false;
};

LinkTrace simulate_session(const FeatureTensor& t, const GatePolicy& policy, const Encoder& encoder);
LinkTrace simulate_session(const FeatureTensor& t, const GatePolicy& policy);

struct CorpusSummary {
  std::size_t features = 0;
  std::uint64_t transmitted_bits = 0;
  /// Bits had every feature been sent at the highest ladder point.
  std::uint64_t reference_bits = 0;
  /// reference_bits - transmitted_bits (negative only if rate is not monotone).
  std::int64_t bits_saved = 0;
  std::size_t total_reencodes = 0;
  std::size_t first_attempt_passes = 0;
  std::size_t forced_transmissions = 0;
  std::optional<double> mean_final_quality;  // over defined final qualities
  double first_attempt_pass_rate = 0.0;
};

struct CorpusResult {
  std::vector<LinkTrace> traces;  // input order
  CorpusSummary summary;
};

/// Bits of the highest ladder point for one feature (the always-transmit reference).
std::uint64_t reference_bits(const FeatureTensor& t, const GatePolicy& policy, const Encoder& encoder);

/// Reduces traces (plus each feature's reference bits) into totals.
/// Traces are summed in feature_id order.
CorpusSummary summarize(std::span<const LinkTrace> traces, std::span<const std::uint64_t> reference);

/// Runs every session, using up to `threads` workers (0 = hardware concurrency).
CorpusResult simulate_corpus(std::span<const FeatureTensor> features, const GatePolicy& policy,
                             unsigned threads = 1);

nlohmann::ordered_json policy_to_json(const GatePolicy& policy);
GatePolicy policy_from_json(const nlohmann::json& j);

/// Parses a ladder spec such as "block:20,18,16" or "latent:9,7,5@seed" or
/// "block" (full ladder, lowest rate first).
std::vector<CodecConfig> parse_ladder_spec(std::string_view spec);

}  // namespace cfqa

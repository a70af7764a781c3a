#include "cfqa/link_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "cfqa/errors.hpp"
#include "cfqa/parallel.hpp"
#include "cfqa/text_io.hpp"

namespace cfqa {

std::string_view to_string(Decision d) {
  return d == Decision::Transmit ? "Transmit" : "ReEncode";
}

void GatePolicy::validate() const {
  if (ladder.empty()) throw ConfigError("gate policy ladder is empty");
  for (const auto& c : ladder) {
    if (c.kind != ladder.front().kind) throw ConfigError("gate policy ladder mixes codec kinds");
    c.validate();
  }
  if (!std::isfinite(threshold)) throw ConfigError("gate threshold must be finite");
}

Decision gate(const QualityScore& q, double threshold) {
  if (!q.value) return Decision::ReEncode;
  const bool pass = q.orientation() == Orientation::HigherIsBetter ? *q.value >= threshold
                                                                   : *q.value <= threshold;
  return pass ? Decision::Transmit : Decision::ReEncode;
}

LinkTrace simulate_session(const FeatureTensor& t, const GatePolicy& policy, const Encoder& encoder) {
  policy.validate();
  LinkTrace trace;
  trace.feature_id = t.id();
  for (std::size_t i = 0; i < policy.ladder.size(); ++i) {
    const auto& config = policy.ladder[i];
    const auto record = encode_feature(t, config, encoder);
    const auto q = score(policy.metric, t, record.reconstruction);
    const bool passed = gate(q, policy.threshold) == Decision::Transmit;
    const bool last = i + 1 == policy.ladder.size() ||
                      (policy.max_reencodes && trace.reencode_count >= *policy.max_reencodes);
    Attempt attempt{config, record.bitstream_bits, q.value, Decision::ReEncode};
    if (passed || last) {
      attempt.decision = Decision::Transmit;
      trace.attempts.push_back(attempt);
      trace.transmitted_bits = record.bitstream_bits;
      trace.final_quality = q.value;
      trace.forced = !passed;
      break;
    }
    trace.attempts.push_back(attempt);
    ++trace.reencode_count;
  }
  return trace;
}

LinkTrace simulate_session(const FeatureTensor& t, const GatePolicy& policy) {
  return simulate_session(t, policy, Encoder{});
}

std::uint64_t reference_bits(const FeatureTensor& t, const GatePolicy& policy, const Encoder& encoder) {
  policy.validate();
  return encode_feature(t, policy.ladder.back(), encoder).bitstream_bits;
}

CorpusSummary summarize(std::span<const LinkTrace> traces, std::span<const std::uint64_t> reference) {
  if (traces.size() != reference.size()) throw ShapeError("one reference rate per trace is required");
  std::vector<std::size_t> order(traces.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return traces[a].feature_id < traces[b].feature_id;
  });

  CorpusSummary s;
  s.features = traces.size();
  double quality_sum = 0.0;
  std::size_t quality_n = 0;
  for (std::size_t i : order) {
    const auto& tr = traces[i];
    s.transmitted_bits += tr.transmitted_bits;
    s.reference_bits += reference[i];
    s.total_reencodes += tr.reencode_count;
    if (tr.forced) ++s.forced_transmissions;
    if (tr.attempts.size() == 1 && !tr.forced) ++s.first_attempt_passes;
    if (tr.final_quality) {
      quality_sum += *tr.final_quality;
      ++quality_n;
    }
  }
  s.bits_saved = static_cast<std::int64_t>(s.reference_bits) - static_cast<std::int64_t>(s.transmitted_bits);
  if (quality_n) s.mean_final_quality = quality_sum / static_cast<double>(quality_n);
  if (s.features)
    s.first_attempt_pass_rate = static_cast<double>(s.first_attempt_passes) / static_cast<double>(s.features);
  return s;
}

CorpusResult simulate_corpus(std::span<const FeatureTensor> features, const GatePolicy& policy,
                             unsigned threads) {
  if (features.empty()) throw ConfigError("corpus is empty");
  policy.validate();
  Encoder encoder;
  CorpusResult result;
  result.traces.resize(features.size());
  std::vector<std::uint64_t> reference(features.size(), 0);
  parallel_for(features.size(), threads, [&](std::size_t i) {
    result.traces[i] = simulate_session(features[i], policy, encoder);
    const auto& last = result.traces[i].attempts.back();
    reference[i] = last.config == policy.ladder.back() ? last.bitstream_bits
                                                       : reference_bits(features[i], policy, encoder);
  });
  result.summary = summarize(result.traces, reference);
  return result;
}

// ---------------------------------------------------------------------------
// Policy documents
// ---------------------------------------------------------------------------

nlohmann::ordered_json policy_to_json(const GatePolicy& policy) {
  nlohmann::ordered_json j;
  j["metric"] = std::string(to_string(policy.metric));
  j["threshold"] = policy.threshold;
  j["ladder"] = nlohmann::ordered_json::array();
  for (const auto& c : policy.ladder) j["ladder"].push_back(config_to_json(c));
  if (policy.max_reencodes) j["max_reencodes"] = *policy.max_reencodes;
  return j;
}

GatePolicy policy_from_json(const nlohmann::json& j) {
  GatePolicy p;
  try {
    p.metric = parse_metric(j.at("metric").get<std::string>());
    p.threshold = j.at("threshold").get<double>();
    const auto& ladder = j.at("ladder");
    if (ladder.is_string()) {
      p.ladder = parse_ladder_spec(ladder.get<std::string>());
    } else {
      for (const auto& c : ladder) p.ladder.push_back(config_from_json(c));
    }
    if (j.contains("max_reencodes") && !j["max_reencodes"].is_null())
      p.max_reencodes = j["max_reencodes"].get<std::size_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed gate policy: ") + ex.what());
  }
  p.validate();
  return p;
}

std::vector<CodecConfig> parse_ladder_spec(std::string_view spec) {
  std::uint64_t seed = 0;
  if (const auto at = spec.find('@'); at != std::string_view::npos) {
    seed = parse_uint(spec.substr(at + 1));
    spec = spec.substr(0, at);
  }
  std::string_view kind = spec;
  std::string_view points;
  if (const auto colon = spec.find(':'); colon != std::string_view::npos) {
    kind = spec.substr(0, colon);
    points = spec.substr(colon + 1);
  }

  std::vector<CodecConfig> ladder;
  if (kind == "uniform") {
    if (!points.empty()) throw ConfigError("uniform ladder takes no points");
    return {CodecConfig::uniform()};
  }
  const bool block = kind == "block";
  if (!block && kind != "latent") throw ConfigError("unknown ladder kind '" + std::string(kind) + "'");

  if (points.empty()) {
    // Full ladder, lowest rate first.
    auto full = default_ladder(block ? CodecKind::BlockTransform : CodecKind::LatentSurrogate, seed);
    std::reverse(full.begin(), full.end());
    return full;
  }
  for (const auto& field : split_csv_line(points)) {
    const auto v = static_cast<int>(parse_int(field));
    ladder.push_back(block ? CodecConfig::block(v) : CodecConfig::latent(v, seed));
    ladder.back().validate();
  }
  return ladder;
}

}  // namespace cfqa

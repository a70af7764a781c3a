#include "cfqa/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <tuple>

#include "cfqa/errors.hpp"
#include "cfqa/parallel.hpp"
#include "cfqa/text_io.hpp"

namespace cfqa {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

std::vector<CodecConfig> RunConfig::resolved_ladder() const {
  if (!ladder.empty()) return ladder;
  return default_ladder(codec, codec_seed);
}

void RunConfig::validate() const {
  if (manifest.has_value() == synthetic.has_value())
    throw ConfigError("exactly one input source is required (manifest or synthetic)");
  if (synthetic && synthetic->count == 0) throw ConfigError("synthetic count must be positive");
  const auto points = resolved_ladder();
  if (points.size() < kMinSeriesLength)
    throw ConfigError("ladder needs at least " + std::to_string(kMinSeriesLength) + " points");
  for (const auto& p : points) {
    if (p.kind != codec) throw ConfigError("ladder point " + p.label() + " does not match the codec kind");
    p.validate();
  }
  if (metrics.empty()) throw ConfigError("at least one metric is required");
  if (mode != DistortionMode::Injected && !predictions)
    throw ConfigError("mode '" + std::string(to_string(mode)) + "' needs a predictions directory");
  if (output.empty()) throw ConfigError("output directory is required");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("manifest")) c.manifest = j["manifest"].get<std::string>();
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      SyntheticSpec spec;
      spec.task = parse_task(s.value("task", std::string("Synthetic")));
      spec.count = s.value("count", std::size_t{10});
      spec.seed = s.value("seed", std::uint64_t{0});
      c.synthetic = spec;
    }
    if (j.contains("codec")) c.codec = parse_codec_kind(j["codec"].get<std::string>());
    c.codec_seed = j.value("codec_seed", std::uint64_t{0});
    if (j.contains("ladder")) {
      const auto& l = j["ladder"];
      if (l.is_string()) {
        c.ladder = parse_ladder_spec(l.get<std::string>());
      } else {
        for (const auto& p : l) c.ladder.push_back(config_from_json(p));
      }
      if (!c.ladder.empty() && !j.contains("codec")) c.codec = c.ladder.front().kind;
    }
    if (j.contains("metrics")) {
      c.metrics.clear();
      for (const auto& m : j["metrics"]) c.metrics.push_back(parse_metric(m.get<std::string>()));
    }
    if (j.contains("mode")) c.mode = parse_distortion_mode(j["mode"].get<std::string>());
    if (j.contains("predictions")) c.predictions = j["predictions"].get<std::string>();
    if (j.contains("output")) c.output = j["output"].get<std::string>();
    c.threads = j.value("threads", 0u);
    if (j.contains("policy")) c.policy = policy_from_json(j["policy"]);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed run configuration: ") + ex.what());
  }
  return c;
}

unsigned effective_threads(unsigned requested) {
  unsigned n = requested;
  if (const char* env = std::getenv("CFQA_THREADS"); env && *env) {
    unsigned cap = 0;
    try {
      cap = static_cast<unsigned>(parse_uint(env));
    } catch (const FormatError&) {
      throw ConfigError("CFQA_THREADS must be a non-negative integer");
    }
    if (cap > 0) n = n == 0 ? cap : std::min(n, cap);
  }
  return n;
}

// ---------------------------------------------------------------------------
// Output bookkeeping
// ---------------------------------------------------------------------------

namespace {

/// Tracks every file and directory a command creates; unless committed, all
/// of them are removed again when the command unwinds.
class OutputTransaction {
 public:
  explicit OutputTransaction(fs::path root) : root_(std::move(root)) { make_dirs(root_); }
  OutputTransaction(const OutputTransaction&) = delete;
  OutputTransaction& operator=(const OutputTransaction&) = delete;

  ~OutputTransaction() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) {
      if (fs::is_directory(*it, ec) && fs::is_empty(*it, ec)) fs::remove(*it, ec);
    }
  }

  const fs::path& root() const { return root_; }

  fs::path prepare(const fs::path& relative) {
    const fs::path full = root_ / relative;
    make_dirs(full.parent_path());
    std::lock_guard lock(mutex_);
    files_.push_back(full);
    return full;
  }

  void write_text(const fs::path& relative, const std::string& text) {
    const auto full = prepare(relative);
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + full.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + full.string());
  }

  void commit() { committed_ = true; }

 private:
  void make_dirs(const fs::path& dir) {
    std::lock_guard lock(mutex_);
    std::vector<fs::path> missing;
    for (fs::path p = dir; !p.empty() && !fs::exists(p); p = p.parent_path()) {
      missing.push_back(p);
      if (p == p.parent_path()) break;
    }
    for (auto it = missing.rbegin(); it != missing.rend(); ++it) {
      std::error_code ec;
      fs::create_directory(*it, ec);
      if (ec) throw IoError("cannot create directory " + it->string() + ": " + ec.message());
      dirs_.push_back(*it);
    }
  }

  fs::path root_;
  std::mutex mutex_;
  std::vector<fs::path> files_;
  std::vector<fs::path> dirs_;
  bool committed_ = false;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string point_name(std::size_t index) { return "p" + std::to_string(index); }

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

struct InputFeature {
  std::string id;
  Task task = Task::Synthetic;
  std::function<FeatureTensor()> load;
  /// Where the original lives once compress has run; relative paths are
  /// relative to the output directory.
  std::string original_path;
  bool materialize = false;  // synthetic originals are written by compress
};

std::string synthetic_id(Task task, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  std::string name(to_string(task));
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return name + "-" + buf;
}

std::vector<InputFeature> list_inputs(const RunConfig& config) {
  std::vector<InputFeature> inputs;
  if (config.synthetic) {
    const auto spec = *config.synthetic;
    for (std::size_t i = 0; i < spec.count; ++i) {
      InputFeature in;
      in.id = synthetic_id(spec.task, i);
      in.task = spec.task;
      const std::uint64_t seed = spec.seed + i;
      in.load = [task = spec.task, seed, id = in.id] { return synth_feature(task, seed).with_id(id); };
      in.original_path = (fs::path("features") / (in.id + ".cft")).generic_string();
      in.materialize = true;
      inputs.push_back(std::move(in));
    }
  } else {
    if (!fs::exists(*config.manifest)) throw IoError("manifest not found: " + config.manifest->string());
    auto manifest = std::make_shared<Manifest>(read_manifest(*config.manifest));
    for (const auto& entry : manifest->entries) {
      InputFeature in;
      in.id = entry.feature_id;
      in.task = entry.task;
      in.load = [manifest, entry] { return load_entry(*manifest, entry); };
      in.original_path = fs::absolute(manifest->root / entry.file_path).lexically_normal().generic_string();
      inputs.push_back(std::move(in));
    }
  }
  std::sort(inputs.begin(), inputs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    if (inputs[i].id == inputs[i - 1].id) throw ConfigError("duplicate feature id " + inputs[i].id);
  }
  return inputs;
}

fs::path resolve_in_output(const RunConfig& config, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : config.output / p;
}

struct RecordRow {
  std::string feature_id;
  Task task = Task::Synthetic;
  std::string codec;
  std::size_t ladder_point = 0;
  std::string config;
  double strength = 0.0;
  std::uint64_t bits = 0;
  double bpfp = 0.0;
  std::string original;
  std::string reconstruction;
};

const std::vector<std::string> kRecordHeader = {"feature_id", "task",     "codec",          "ladder_point",
                                                "config",     "strength", "bitstream_bits", "bpfp",
                                                "original",   "reconstruction"};

std::vector<RecordRow> read_records(const RunConfig& config) {
  const auto path = config.output / files::kRecords;
  if (!fs::exists(path)) throw IoError("records not found: " + path.string() + " (run compress first)");
  const auto table = read_csv(path);
  std::vector<RecordRow> rows;
  for (const auto& r : table.rows) {
    RecordRow row;
    row.feature_id = r[table.column("feature_id")];
    row.task = parse_task(r[table.column("task")]);
    row.codec = r[table.column("codec")];
    row.ladder_point = parse_uint(r[table.column("ladder_point")]);
    row.config = r[table.column("config")];
    row.strength = parse_double(r[table.column("strength")]);
    row.bits = parse_uint(r[table.column("bitstream_bits")]);
    row.bpfp = parse_double(r[table.column("bpfp")]);
    row.original = r[table.column("original")];
    row.reconstruction = r[table.column("reconstruction")];
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Groups record rows by feature, preserving sorted order.
std::map<std::string, std::vector<const RecordRow*>> by_feature(const std::vector<RecordRow>& rows) {
  std::map<std::string, std::vector<const RecordRow*>> groups;
  for (const auto& r : rows) groups[r.feature_id].push_back(&r);
  for (auto& [id, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](const RecordRow* a, const RecordRow* b) { return a->ladder_point < b->ladder_point; });
  }
  return groups;
}

}  // namespace

// ---------------------------------------------------------------------------
// compress
// ---------------------------------------------------------------------------

CompressSummary cmd_compress(const RunConfig& config) {
  config.validate();
  const auto ladder = config.resolved_ladder();
  const auto inputs = list_inputs(config);
  const unsigned threads = effective_threads(config.threads);

  OutputTransaction out(config.output);
  Encoder encoder;
  std::vector<std::vector<RecordRow>> per_feature(inputs.size());
  std::vector<std::uint64_t> elements(inputs.size(), 0);
  std::vector<ManifestEntry> manifest_entries(inputs.size());

  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    const auto& in = inputs[i];
    const FeatureTensor original = in.load();
    elements[i] = original.size();
    if (in.materialize) {
      save_tensor(original, out.prepare(in.original_path));
      manifest_entries[i] = make_entry(original, in.original_path, "synthetic:seed=" +
                                       std::to_string(config.synthetic->seed + i), "synthetic");
    }
    const auto records = rate_ladder(original, ladder, encoder);
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& rec = records[k];
      const std::string recon_rel = (fs::path("records") / in.id / (point_name(k) + ".cft")).generic_string();
      const std::string sidecar_rel = (fs::path("records") / in.id / (point_name(k) + ".json")).generic_string();
      save_tensor(rec.reconstruction, out.prepare(recon_rel));
      out.write_text(sidecar_rel, record_sidecar(rec, recon_rel).dump(2) + "\n");
      per_feature[i].push_back(RecordRow{in.id, in.task, std::string(to_string(rec.config.kind)), k,
                                         rec.config.label(), rec.config.strength(), rec.bitstream_bits,
                                         rec.bpfp, in.original_path, recon_rel});
    }
  });

  if (config.synthetic) {
    write_manifest(manifest_entries, out.prepare(files::kManifest));
  }

  std::vector<std::vector<std::string>> rows;
  for (const auto& feature_rows : per_feature) {
    for (const auto& r : feature_rows) {
      rows.push_back({r.feature_id, std::string(to_string(r.task)), r.codec, std::to_string(r.ladder_point),
                      r.config, format_double(r.strength), std::to_string(r.bits), format_double(r.bpfp),
                      r.original, r.reconstruction});
    }
  }
  out.write_text(files::kRecords, to_csv(kRecordHeader, rows));

  // Rate table: uncompressed reference, then the mean rate of each ladder point.
  std::vector<std::vector<std::string>> rate_rows;
  double mean_elements = 0.0;
  for (auto e : elements) mean_elements += static_cast<double>(e);
  mean_elements /= static_cast<double>(inputs.size());
  rate_rows.push_back({"reference", "float32", format_double(kUncompressedBpfp),
                       format_double(kUncompressedBpfp * mean_elements)});
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    double bpfp = 0.0, bits = 0.0;
    for (const auto& feature_rows : per_feature) {
      bpfp += feature_rows[k].bpfp;
      bits += static_cast<double>(feature_rows[k].bits);
    }
    const auto n = static_cast<double>(per_feature.size());
    rate_rows.push_back({std::to_string(k), ladder[k].label(), format_double(bpfp / n), format_double(bits / n)});
  }
  out.write_text(files::kRateTable, to_csv({"ladder_point", "config", "mean_bpfp", "mean_bits"}, rate_rows));

  out.commit();
  return {inputs.size(), inputs.size() * ladder.size()};
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

std::size_t cmd_score(const RunConfig& config) {
  config.validate();
  const auto records = read_records(config);
  const auto groups = by_feature(records);
  std::vector<const std::vector<const RecordRow*>*> work;
  for (const auto& [id, members] : groups) work.push_back(&members);

  std::vector<std::vector<std::vector<std::string>>> per_feature(work.size());
  parallel_for(work.size(), effective_threads(config.threads), [&](std::size_t i) {
    const auto& members = *work[i];
    const auto* first = members.front();
    const FeatureTensor original = load_tensor(resolve_in_output(config, first->original), first->task);
    for (const auto* row : members) {
      const FeatureTensor recon = load_tensor(resolve_in_output(config, row->reconstruction), row->task);
      if (recon.shape() != original.shape())
        throw ShapeError("reconstruction " + row->reconstruction + " does not match its original");
      for (Metric m : config.metrics) {
        const auto q = score(m, original, recon);
        per_feature[i].push_back({row->feature_id, row->codec, std::to_string(row->ladder_point),
                                  std::string(to_string(m)), format_optional(q.value)});
      }
    }
  });

  std::vector<std::vector<std::string>> rows;
  for (auto& feature_rows : per_feature) {
    for (auto& r : feature_rows) rows.push_back(std::move(r));
  }
  OutputTransaction out(config.output);
  out.write_text(files::kScores, to_csv({"feature_id", "codec", "ladder_point", "metric", "value"}, rows));
  out.commit();
  return rows.size();
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

namespace {

struct PredictionLocator {
  fs::path dir;

  fs::path file(const std::string& feature_id, const std::string& stem, const char* ext) const {
    return dir / feature_id / (stem + ext);
  }

  std::optional<fs::path> optional_file(const std::string& feature_id, const std::string& stem,
                                        const char* ext) const {
    auto p = file(feature_id, stem, ext);
    if (fs::exists(p)) return p;
    return std::nullopt;
  }

  DepthMap depth(const std::string& feature_id, const std::string& stem) const {
    return read_depth_map(file(feature_id, stem, ".cft"), optional_file(feature_id, stem + "_valid", ".pgm"));
  }
};

double prediction_label(const PredictionLocator& loc, const RecordRow& row, DistortionMode mode) {
  const std::string point = point_name(row.ladder_point);
  switch (row.task) {
    case Task::Cls:
      return cls_rank(read_logits_csv(loc.file(row.feature_id, point, ".csv"))).value;
    case Task::Seg: {
      const auto orig = read_seg_mask(loc.file(row.feature_id, "orig", ".pgm"));
      const auto comp = read_seg_mask(loc.file(row.feature_id, point, ".pgm"));
      std::optional<SegMask> gt;
      if (mode == DistortionMode::Annotation) gt = read_seg_mask(loc.file(row.feature_id, "gt", ".pgm"));
      return delta_miou(orig, comp, gt, mode).value;
    }
    case Task::Dpt: {
      const auto orig = loc.depth(row.feature_id, "orig");
      const auto comp = loc.depth(row.feature_id, point);
      std::optional<DepthMap> gt;
      if (mode == DistortionMode::Annotation) gt = loc.depth(row.feature_id, "gt");
      return delta_rmse(orig, comp, gt, mode).value;
    }
    case Task::Synthetic:
      break;
  }
  throw ConfigError("synthetic features have no task predictions; use injected labels");
}

}  // namespace

std::size_t cmd_label(const RunConfig& config) {
  config.validate();
  const auto records = read_records(config);
  std::vector<std::vector<std::string>> rows(records.size());
  const PredictionLocator loc{config.predictions.value_or(fs::path{})};
  parallel_for(records.size(), effective_threads(config.threads), [&](std::size_t i) {
    const auto& r = records[i];
    const double value = config.mode == DistortionMode::Injected ? r.strength : prediction_label(loc, r, config.mode);
    rows[i] = {r.feature_id, std::to_string(r.ladder_point), std::string(to_string(r.task)),
               std::string(to_string(config.mode)), format_double(value)};
  });
  OutputTransaction out(config.output);
  out.write_text(files::kLabels, to_csv({"feature_id", "ladder_point", "task", "mode", "value"}, rows));
  out.commit();
  return rows.size();
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

namespace {

std::string format_bin(std::size_t i) {
  const long tenths = static_cast<long>(i) - 10;
  const long whole = std::labs(tenths) / 10;
  const long frac = std::labs(tenths) % 10;
  return std::string(tenths < 0 ? "-" : "") + std::to_string(whole) + "." + std::to_string(frac);
}

}  // namespace

EvaluateSummary cmd_evaluate(const RunConfig& config) {
  const auto scores_path = config.output / files::kScores;
  const auto labels_path = config.output / files::kLabels;
  if (!fs::exists(scores_path)) throw IoError("scores not found: " + scores_path.string());
  if (!fs::exists(labels_path)) throw IoError("labels not found: " + labels_path.string());
  const auto scores = read_csv(scores_path);
  const auto labels = read_csv(labels_path);

  using PointKey = std::pair<std::string, std::size_t>;
  struct LabelValue {
    Task task;
    double value;
  };
  std::map<PointKey, LabelValue> label_map;
  {
    const auto c_id = labels.column("feature_id"), c_pt = labels.column("ladder_point"),
               c_task = labels.column("task"), c_val = labels.column("value");
    for (const auto& r : labels.rows) {
      label_map[{r[c_id], parse_uint(r[c_pt])}] = {parse_task(r[c_task]), parse_double(r[c_val])};
    }
  }

  // (feature, codec, metric) -> ladder point -> score
  using SeriesKey = std::tuple<std::string, std::string, Metric>;
  std::map<SeriesKey, std::map<std::size_t, std::optional<double>>> series_points;
  std::set<PointKey> scored_points;
  std::set<std::string> orphans;
  {
    const auto c_id = scores.column("feature_id"), c_codec = scores.column("codec"),
               c_pt = scores.column("ladder_point"), c_metric = scores.column("metric"),
               c_val = scores.column("value");
    for (const auto& r : scores.rows) {
      const PointKey key{r[c_id], parse_uint(r[c_pt])};
      scored_points.insert(key);
      if (!label_map.count(key)) orphans.insert("score without label: " + key.first + " point " + std::to_string(key.second));
      series_points[{r[c_id], r[c_codec], parse_metric(r[c_metric])}][key.second] = parse_optional(r[c_val]);
    }
  }
  for (const auto& [key, value] : label_map) {
    if (!scored_points.count(key))
      orphans.insert("label without score: " + key.first + " point " + std::to_string(key.second));
  }
  if (!orphans.empty()) {
    std::string msg = "cannot join scores and labels on (feature_id, ladder_point):";
    for (const auto& o : orphans) msg += "\n  " + o;
    throw JoinError(msg);
  }

  std::vector<SeriesCorrelation> correlations;
  for (const auto& [key, points] : series_points) {
    const auto& [feature_id, codec, metric] = key;
    Series s{feature_id, codec, Task::Synthetic, metric, {}, {}};
    bool complete = true;
    for (const auto& [point, value] : points) {
      const auto& label = label_map.at({feature_id, point});
      s.task = label.task;
      if (!value) complete = false;
      s.scores.push_back(value.value_or(0.0));
      s.labels.push_back(label.value);
    }
    if (complete) {
      correlations.push_back(evaluate_series(s));
    } else {
      if (s.scores.size() < kMinSeriesLength) throw ShapeError("series for " + feature_id + " is too short");
      correlations.push_back({feature_id, codec, s.task, metric, std::nullopt, std::nullopt});
    }
  }
  std::sort(correlations.begin(), correlations.end(), [](const auto& a, const auto& b) {
    return std::tie(a.codec, a.task, a.metric, a.feature_id) < std::tie(b.codec, b.task, b.metric, b.feature_id);
  });

  OutputTransaction out(config.output);

  std::vector<std::vector<std::string>> corr_rows;
  for (const auto& c : correlations) {
    corr_rows.push_back({c.feature_id, c.codec, std::string(to_string(c.task)), std::string(to_string(c.metric)),
                         format_optional(c.plcc), format_optional(c.srocc)});
  }
  out.write_text(files::kCorrelations,
                 to_csv({"feature_id", "codec", "task", "metric", "plcc", "srocc"}, corr_rows));

  EvaluateSummary summary{correlations.size(), aggregate(correlations)};
  std::vector<std::vector<std::string>> table_rows;
  for (const auto& r : summary.table) {
    table_rows.push_back({r.codec, std::string(to_string(r.task)), std::string(to_string(r.metric)),
                          format_optional(r.mean_plcc), format_optional(r.mean_srocc),
                          std::to_string(r.undefined_count)});
  }
  out.write_text(files::kTable, to_csv({"codec", "task", "metric", "plcc", "srocc", "undefined_count"}, table_rows));

  std::map<std::tuple<Metric, Task, std::string>, std::vector<std::optional<double>>> hist_groups;
  for (const auto& c : correlations) hist_groups[{c.metric, c.task, c.codec}].push_back(c.plcc);
  std::vector<std::vector<std::string>> hist_rows;
  for (const auto& [key, values] : hist_groups) {
    const auto h = plcc_histogram(values);
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
      hist_rows.push_back({std::string(to_string(std::get<0>(key))), std::string(to_string(std::get<1>(key))),
                           std::get<2>(key), format_bin(b), std::to_string(h.counts[b])});
    }
  }
  out.write_text(files::kHistogram, to_csv({"metric", "task", "codec", "bin", "count"}, hist_rows));

  out.commit();
  return summary;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

CorpusSummary cmd_simulate(const RunConfig& config) {
  if (!config.policy) throw ConfigError("simulate needs a gate policy (--policy or --threshold)");
  const GatePolicy& policy = *config.policy;
  policy.validate();
  if (config.manifest.has_value() == config.synthetic.has_value())
    throw ConfigError("exactly one input source is required (manifest or synthetic)");
  const auto inputs = list_inputs(config);
  if (inputs.empty()) throw ConfigError("corpus is empty");

  Encoder encoder;
  std::vector<LinkTrace> traces(inputs.size());
  std::vector<std::uint64_t> reference(inputs.size(), 0);
  parallel_for(inputs.size(), effective_threads(config.threads), [&](std::size_t i) {
    const FeatureTensor t = inputs[i].load();
    traces[i] = simulate_session(t, policy, encoder);
    const auto& last = traces[i].attempts.back();
    reference[i] = last.config == policy.ladder.back() ? last.bitstream_bits : reference_bits(t, policy, encoder);
  });
  const auto summary = summarize(traces, reference);

  std::vector<std::vector<std::string>> trace_rows, session_rows;
  for (const auto& tr : traces) {
    for (std::size_t a = 0; a < tr.attempts.size(); ++a) {
      const auto& at = tr.attempts[a];
      trace_rows.push_back({tr.feature_id, std::to_string(a), at.config.label(), std::to_string(at.bitstream_bits),
                            format_optional(at.quality), std::string(to_string(at.decision))});
    }
    session_rows.push_back({tr.feature_id, std::to_string(tr.attempts.size()), std::to_string(tr.reencode_count),
                            std::to_string(tr.transmitted_bits), format_optional(tr.final_quality),
                            tr.forced ? "true" : "false"});
  }

  OutputTransaction out(config.output);
  out.write_text(files::kTraces,
                 to_csv({"feature_id", "attempt", "config", "bitstream_bits", "quality", "decision"}, trace_rows));
  out.write_text(files::kSessions, to_csv({"feature_id", "attempts", "reencode_count", "transmitted_bits",
                                           "final_quality", "forced"},
                                          session_rows));
  out.write_text(files::kSummary,
                 to_csv({"metric", "threshold", "features", "transmitted_bits", "reference_bits", "bits_saved",
                         "total_reencodes", "first_attempt_passes", "first_attempt_pass_rate",
                         "forced_transmissions", "mean_final_quality"},
                        {{std::string(to_string(policy.metric)), format_double(policy.threshold),
                          std::to_string(summary.features), std::to_string(summary.transmitted_bits),
                          std::to_string(summary.reference_bits), std::to_string(summary.bits_saved),
                          std::to_string(summary.total_reencodes), std::to_string(summary.first_attempt_passes),
                          format_double(summary.first_attempt_pass_rate),
                          std::to_string(summary.forced_transmissions),
                          format_optional(summary.mean_final_quality)}}));
  out.commit();
  return summary;
}

EvaluateSummary cmd_report(const RunConfig& config) {
  cmd_compress(config);
  cmd_score(config);
  cmd_label(config);
  return cmd_evaluate(config);
}

}  // namespace cfqa

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "cfqa/errors.hpp"
#include "cfqa/pipeline.hpp"
#include "cfqa/text_io.hpp"
#include "temp_dir.hpp"

using namespace cfqa;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(CFQA_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

RunConfig small_config(const fs::path& out, std::size_t count = 3) {
  RunConfig c;
  c.synthetic = SyntheticSpec{Task::Synthetic, count, 7};
  c.output = out;
  c.threads = 2;
  return c;
}

// Minimal synthetic-shaped tensors keep these runs fast.
RunConfig tiny_manifest_config(const TempDir& dir, std::size_t count) {
  std::vector<ManifestEntry> entries;
  fs::create_directories(dir / "in");
  for (std::uint64_t s = 0; s < count; ++s) {
    const auto t = synth_feature({16, 32}, s).with_id("feat" + std::to_string(s));
    save_tensor(t, dir / "in" / (t.id() + ".cft"));
    entries.push_back(make_entry(t, t.id() + ".cft"));
  }
  write_manifest(entries, dir / "in" / "manifest.json");
  RunConfig c;
  c.manifest = dir / "in" / "manifest.json";
  c.output = dir / "out";
  return c;
}

}  // namespace

TEST(Compress, ClsLadderWritesTenRecordsAndReferenceRow) {
  TempDir dir;
  RunConfig c;
  c.synthetic = SyntheticSpec{Task::Cls, 2, 1};
  c.output = dir / "out";
  const auto s = cmd_compress(c);
  EXPECT_EQ(s.features, 2u);
  EXPECT_EQ(s.records, 20u);
  const auto records = read_csv(dir / "out" / "records.csv");
  EXPECT_EQ(records.rows.size(), 20u);
  const auto rate = read_csv(dir / "out" / "rate_table.csv");
  ASSERT_EQ(rate.rows.size(), 11u);
  EXPECT_EQ(rate.rows[0][rate.column("mean_bpfp")], "32");
  for (std::size_t i = 1; i < rate.rows.size(); ++i) EXPECT_LT(parse_double(rate.rows[i][2]), 32.0);
  const auto sidecar = nlohmann::json::parse(slurp(dir / "out" / "records" / "cls-0000" / "p0.json"));
  EXPECT_EQ(sidecar["kind"], "BlockTransform");
  EXPECT_EQ(sidecar["qp"], 2);
  const auto recon = load_tensor(dir / "out" / sidecar["reconstruction"].get<std::string>(), Task::Cls);
  EXPECT_EQ(recon.shape(), (Shape{257, 1536}));
  EXPECT_TRUE(validate_manifest(read_manifest(dir / "out" / "manifest.json")).empty());
}

TEST(Compress, ManifestInputKeepsFeatureIds) {
  TempDir dir;
  auto c = tiny_manifest_config(dir, 3);
  c.ladder = parse_ladder_spec("latent:0,3,6,9@2");
  c.codec = CodecKind::LatentSurrogate;
  EXPECT_EQ(cmd_compress(c).records, 12u);
  const auto records = read_csv(dir / "out" / "records.csv");
  EXPECT_EQ(records.rows.front()[0], "feat0");
  EXPECT_EQ(records.rows.front()[records.column("config")], "lambda=0");
  EXPECT_FALSE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Report, InjectedLabelsTrackStrength) {
  TempDir dir;
  const auto c = small_config(dir / "out", 4);
  const auto s = cmd_report(c);
  EXPECT_EQ(s.series, 12u);
  ASSERT_EQ(s.table.size(), 3u);
  for (const auto& row : s.table) {
    EXPECT_EQ(row.codec, "BlockTransform");
    EXPECT_EQ(row.feature_count, 4u);
    if (row.metric == Metric::MSE) EXPECT_GT(*row.mean_srocc, 0.9);
    if (row.metric == Metric::Cosine) EXPECT_LT(*row.mean_srocc, -0.9);
  }
  const auto labels = read_csv(dir / "out" / "labels.csv");
  EXPECT_EQ(labels.rows[0][labels.column("mode")], "injected");
  EXPECT_EQ(parse_double(labels.rows[1][labels.column("value")]), qp_to_step(4));

  const auto hist = read_csv(dir / "out" / "histogram.csv");
  EXPECT_EQ(hist.rows.size(), 3u * 21);
  std::size_t total = 0;
  for (const auto& r : hist.rows) total += parse_uint(r[4]);
  EXPECT_EQ(total, 12u);
  EXPECT_EQ(hist.rows[0][hist.column("bin")], "-1.0");
  EXPECT_EQ(hist.rows[10][hist.column("bin")], "0.0");
  EXPECT_EQ(hist.rows[20][hist.column("bin")], "1.0");
}

TEST(Evaluate, IdenticalScoresAndLabelsGiveUnitMeans) {
  TempDir dir;
  std::string scores = "feature_id,codec,ladder_point,metric,value\n";
  std::string labels = "feature_id,ladder_point,task,mode,value\n";
  const double values[2][4] = {{0.1, 0.5, 0.2, 0.9}, {3, 1, 2, 7}};
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 4; ++k) {
      const std::string id = "f" + std::to_string(f), v = format_double(values[f][k]);
      scores += id + ",X," + std::to_string(k) + ",MSE," + v + "\n";
      labels += id + "," + std::to_string(k) + ",Cls,consistency," + v + "\n";
    }
  write_file(dir / "scores.csv", scores);
  write_file(dir / "labels.csv", labels);
  RunConfig c;
  c.output = dir.path();
  const auto s = cmd_evaluate(c);
  ASSERT_EQ(s.table.size(), 1u);
  EXPECT_NEAR(*s.table[0].mean_plcc, 1.0, 1e-15);
  EXPECT_NEAR(*s.table[0].mean_srocc, 1.0, 1e-15);
}

TEST(Evaluate, ThreeFeatureFixtureMatchesHandComputation) {
  TempDir dir;
  // a: perfect, b: reversed, c: scores (1,2,4) vs labels (1,3,2).
  write_file(dir / "scores.csv",
             "feature_id,codec,ladder_point,metric,value\n"
             "a,X,0,Cosine,1\na,X,1,Cosine,2\na,X,2,Cosine,3\n"
             "b,X,0,Cosine,1\nb,X,1,Cosine,2\nb,X,2,Cosine,3\n"
             "c,X,0,Cosine,1\nc,X,1,Cosine,2\nc,X,2,Cosine,4\n");
  write_file(dir / "labels.csv",
             "feature_id,ladder_point,task,mode,value\n"
             "a,0,Seg,consistency,1\na,1,Seg,consistency,2\na,2,Seg,consistency,3\n"
             "b,0,Seg,consistency,3\nb,1,Seg,consistency,2\nb,2,Seg,consistency,1\n"
             "c,0,Seg,consistency,1\nc,1,Seg,consistency,3\nc,2,Seg,consistency,2\n");
  RunConfig c;
  c.output = dir.path();
  const auto s = cmd_evaluate(c);
  ASSERT_EQ(s.table.size(), 1u);
  // plcc(c) = 1 / sqrt(42/9 * 2) = 3/sqrt(84); srocc(c) = 1/2.
  EXPECT_NEAR(*s.table[0].mean_plcc, (3.0 / std::sqrt(84.0)) / 3.0, 1e-12);
  EXPECT_NEAR(*s.table[0].mean_srocc, 0.5 / 3.0, 1e-12);
  EXPECT_EQ(s.table[0].task, Task::Seg);
  const auto table = read_csv(dir / "table4.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"codec", "task", "metric", "plcc", "srocc", "undefined_count"}));
}

TEST(Evaluate, ConstantSeriesAreCountedUndefined) {
  TempDir dir;
  write_file(dir / "scores.csv",
             "feature_id,codec,ladder_point,metric,value\n"
             "a,X,0,MSE,1\na,X,1,MSE,2\na,X,2,MSE,3\n"
             "b,X,0,MSE,1\nb,X,1,MSE,2\nb,X,2,MSE,undefined\n");
  write_file(dir / "labels.csv",
             "feature_id,ladder_point,task,mode,value\n"
             "a,0,Cls,consistency,1\na,1,Cls,consistency,1\na,2,Cls,consistency,1\n"
             "b,0,Cls,consistency,1\nb,1,Cls,consistency,2\nb,2,Cls,consistency,3\n");
  RunConfig c;
  c.output = dir.path();
  const auto s = cmd_evaluate(c);
  ASSERT_EQ(s.table.size(), 1u);
  EXPECT_FALSE(s.table[0].mean_plcc.has_value());
  EXPECT_EQ(s.table[0].undefined_count, 2u);
  EXPECT_NE(slurp(dir / "correlations.csv").find("undefined"), std::string::npos);
}

TEST(Simulate, AlwaysPassSendsLowestPoint) {
  TempDir dir;
  auto c = tiny_manifest_config(dir, 5);
  c.policy = GatePolicy{Metric::Cosine, -1.0, parse_ladder_spec("block"), std::nullopt};
  const auto s = cmd_simulate(c);
  std::uint64_t lowest = 0;
  const auto manifest = read_manifest(*c.manifest);
  for (const auto& e : manifest.entries)
    lowest += encode_feature(load_entry(manifest, e), CodecConfig::block(20), Encoder{}).bitstream_bits;
  EXPECT_EQ(s.transmitted_bits, lowest);
  const auto summary = read_csv(dir / "out" / "summary.csv");
  EXPECT_EQ(parse_uint(summary.rows[0][summary.column("transmitted_bits")]), lowest);
  EXPECT_EQ(read_csv(dir / "out" / "traces.csv").rows.size(), 5u);
}

TEST(Simulate, ExhaustionReencodesWholeLadder) {
  TempDir dir;
  auto c = tiny_manifest_config(dir, 3);
  c.policy = GatePolicy{Metric::MSE, -1.0, parse_ladder_spec("block:20,14,8,2"), std::nullopt};
  const auto s = cmd_simulate(c);
  EXPECT_EQ(s.total_reencodes, 3u * 3);
  EXPECT_EQ(s.forced_transmissions, 3u);
  const auto sessions = read_csv(dir / "out" / "sessions.csv");
  for (const auto& r : sessions.rows) {
    EXPECT_EQ(r[sessions.column("reencode_count")], "3");
    EXPECT_EQ(r[sessions.column("forced")], "true");
  }
}

TEST(Simulate, SummaryEqualsPerSessionRecomputation) {
  TempDir dir;
  auto c = tiny_manifest_config(dir, 6);
  c.policy = GatePolicy{Metric::CKA, 0.0, parse_ladder_spec("block"), std::nullopt};
  c.policy->threshold = 0.9999;
  const auto s = cmd_simulate(c);
  const auto sessions = read_csv(dir / "out" / "sessions.csv");
  std::uint64_t bits = 0;
  std::size_t reencodes = 0;
  for (const auto& r : sessions.rows) {
    bits += parse_uint(r[sessions.column("transmitted_bits")]);
    reencodes += parse_uint(r[sessions.column("reencode_count")]);
  }
  EXPECT_EQ(s.transmitted_bits, bits);
  EXPECT_EQ(s.total_reencodes, reencodes);
}

TEST(Cli, MissingManifestExitsTwo) {
  TempDir dir;
  const auto r = run(dir, "compress --manifest " + (dir / "absent.json").string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("manifest"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o" / "records.csv"));
}

TEST(Cli, OrphanLabelsExitThree) {
  TempDir dir;
  const std::string out = (dir / "o").string();
  ASSERT_EQ(run(dir, "report --synthetic-task Synthetic --count 2 --out " + out).code, 0);
  // Drop the last label row.
  auto labels = slurp(dir / "o" / "labels.csv");
  labels.erase(labels.find_last_of('\n', labels.size() - 2) + 1);
  write_file(dir / "o" / "labels.csv", labels);
  const auto r = run(dir, "evaluate --out " + out);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("synthetic-0001 point 9"), std::string::npos) << r.err;
}

TEST(Cli, BadFlagsAndUnknownCommand) {
  TempDir dir;
  EXPECT_EQ(run(dir, "frobnicate").code, 2);
  EXPECT_EQ(run(dir, "compress --synthetic-task Nope --out " + (dir / "o").string()).code, 2);
  EXPECT_EQ(run(dir, "compress --synthetic-task Synthetic --ladder block:3 --out " + (dir / "o").string()).code, 2);
  EXPECT_EQ(run(dir, "--help").code, 0);
}

TEST(Cli, ConfigFileAndFlagOverride) {
  TempDir dir;
  write_file(dir / "run.json", R"({"synthetic": {"task": "Synthetic", "count": 2, "seed": 3},
                                   "ladder": "block:2,10,20", "metrics": ["CKA"],
                                   "output": ")" + (dir / "from-config").string() + R"("})");
  ASSERT_EQ(run(dir, "report --config " + (dir / "run.json").string()).code, 0);
  const auto table = read_csv(dir / "from-config" / "table4.csv");
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0][2], "CKA");
  ASSERT_EQ(run(dir, "report --config " + (dir / "run.json").string() + " --out " + (dir / "flag").string()).code, 0);
  EXPECT_EQ(slurp(dir / "flag" / "table4.csv"), slurp(dir / "from-config" / "table4.csv"));
}

TEST(Cli, SimulateFlags) {
  TempDir dir;
  const auto r = run(dir, "simulate --synthetic-task Synthetic --count 2 --metric MSE --threshold 1e9 "
                          "--ladder block:20,10,2 --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto sessions = read_csv(dir / "o" / "sessions.csv");
  for (const auto& row : sessions.rows) EXPECT_EQ(row[sessions.column("attempts")], "1");
  EXPECT_EQ(run(dir, "simulate --synthetic-task Synthetic --out " + (dir / "p").string()).code, 2);
}

TEST(Failure, PartialOutputsAreRemoved) {
  TempDir dir;
  auto c = tiny_manifest_config(dir, 3);
  // Corrupt the last feature so compress fails after writing earlier ones.
  {
    std::fstream f(dir / "in" / "feat2.cft", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-4, std::ios::end);
    f.put(0x11);
  }
  c.threads = 1;
  EXPECT_THROW(cmd_compress(c), CorruptError);
  EXPECT_FALSE(fs::exists(dir / "out"));

  // A failing label run leaves earlier outputs alone and writes nothing new.
  auto ok = small_config(dir / "ok", 2);
  cmd_compress(ok);
  ok.mode = DistortionMode::Consistency;
  ok.predictions = dir / "missing-predictions";
  EXPECT_THROW(cmd_label(ok), Error);
  EXPECT_FALSE(fs::exists(dir / "ok" / "labels.csv"));
  EXPECT_TRUE(fs::exists(dir / "ok" / "records.csv"));
}

TEST(Labels, ClsPredictionFilesGiveRanks) {
  TempDir dir;
  RunConfig c;
  c.synthetic = SyntheticSpec{Task::Cls, 1, 4};
  c.output = dir / "out";
  c.ladder = parse_ladder_spec("block:2,4,6");
  cmd_compress(c);
  // gt label 0, its logit sinks as the ladder point grows.
  for (int k = 0; k < 3; ++k)
    write_file(dir / "pred" / "cls-0000" / ("p" + std::to_string(k) + ".csv"),
               "0," + std::to_string(5 - 2 * k) + ",2,3,1\n");
  c.mode = DistortionMode::Consistency;
  c.predictions = dir / "pred";
  EXPECT_EQ(cmd_label(c), 3u);
  const auto labels = read_csv(dir / "out" / "labels.csv");
  EXPECT_EQ(labels.rows[0][4], "1");
  EXPECT_EQ(labels.rows[1][4], "1");  // 3 ties 3, lower index wins
  EXPECT_EQ(labels.rows[2][4], "3");
}

TEST(Labels, DepthPredictionFilesGiveRmseDeltas) {
  TempDir dir;
  // A Dpt tensor with one token per scale keeps the fixture small.
  std::vector<float> v(2 * 4 * 1 * 1536);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(std::sin(0.01 * static_cast<double>(i)));
  const FeatureTensor t("dpt0", Task::Dpt, {2, 4, 1, 1536}, v);
  fs::create_directories(dir / "in");
  save_tensor(t, dir / "in" / "dpt0.cft");
  write_manifest({make_entry(t, "dpt0.cft")}, dir / "in" / "manifest.json");

  RunConfig c;
  c.manifest = dir / "in" / "manifest.json";
  c.output = dir / "out";
  c.ladder = parse_ladder_spec("block:2,4,6");
  cmd_compress(c);

  const DepthMatrix base = DepthMatrix::Constant(3, 3, 2.0);
  fs::create_directories(dir / "pred" / "dpt0");
  write_depth_map(DepthMap::all_valid(base), dir / "pred" / "dpt0" / "orig.cft");
  write_depth_map(DepthMap::all_valid(base), dir / "pred" / "dpt0" / "gt.cft");
  for (int k = 0; k < 3; ++k)
    write_depth_map(DepthMap::all_valid(base.array() + 0.5 * k), dir / "pred" / "dpt0" / ("p" + std::to_string(k) + ".cft"));
  c.predictions = dir / "pred";
  for (auto mode : {DistortionMode::Consistency, DistortionMode::Annotation}) {
    c.mode = mode;
    cmd_label(c);
    const auto labels = read_csv(dir / "out" / "labels.csv");
    for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(parse_double(labels.rows[k][4]), 0.5 * k);
    EXPECT_EQ(labels.rows[0][3], std::string(to_string(mode)));
  }
}

TEST(Determinism, RepeatedRunsAreByteIdentical) {
  TempDir dir;
  for (const char* name : {"a", "b"}) {
    auto c = small_config(dir / name, 3);
    c.threads = name[0] == 'a' ? 1 : 3;
    cmd_report(c);
    c.policy = GatePolicy{Metric::Cosine, 0.9999, parse_ladder_spec("block"), 4};
    cmd_simulate(c);
  }
  std::vector<fs::path> files_a, files_b;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) files_a.push_back(fs::relative(e.path(), dir / "a"));
  for (const auto& e : fs::recursive_directory_iterator(dir / "b")) files_b.push_back(fs::relative(e.path(), dir / "b"));
  std::sort(files_a.begin(), files_a.end());
  std::sort(files_b.begin(), files_b.end());
  ASSERT_EQ(files_a, files_b);
  for (const auto& f : files_a) {
    if (fs::is_directory(dir / "a" / f)) continue;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Threads, EnvironmentCapsWorkers) {
  setenv("CFQA_THREADS", "2", 1);
  EXPECT_EQ(effective_threads(0), 2u);
  EXPECT_EQ(effective_threads(8), 2u);
  EXPECT_EQ(effective_threads(1), 1u);
  setenv("CFQA_THREADS", "0", 1);
  EXPECT_EQ(effective_threads(0), 0u);
  setenv("CFQA_THREADS", "lots", 1);
  EXPECT_THROW(effective_threads(0), ConfigError);
  unsetenv("CFQA_THREADS");
}

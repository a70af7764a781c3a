#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cfqa/errors.hpp"
#include "cfqa/pipeline.hpp"

namespace cfqa {

namespace {

struct CliOptions {
  std::string config_path;
  std::string manifest;
  std::string synthetic_task;
  std::size_t count = 10;
  std::uint64_t seed = 0;
  std::string codec;
  std::string ladder;
  std::uint64_t codec_seed = 0;
  std::vector<std::string> metrics;
  std::string mode;
  std::string predictions;
  std::string output;
  unsigned threads = 0;
  // simulate
  std::string policy_path;
  std::string gate_metric;
  std::optional<double> threshold;
  std::optional<std::size_t> max_reencodes;
};

void add_input_options(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration; flags override its keys");
  cmd->add_option("--manifest", o.manifest, "feature manifest (JSON)");
  cmd->add_option("--synthetic-task", o.synthetic_task, "generate synthetic features of this task instead");
  cmd->add_option("--count", o.count, "number of synthetic features");
  cmd->add_option("--seed", o.seed, "synthetic feature seed");
  cmd->add_option("--codec", o.codec, "UniformOnly, BlockTransform or LatentSurrogate");
  cmd->add_option("--ladder", o.ladder, "ladder spec, e.g. block:2,4,6 or latent:0,1,2@7");
  cmd->add_option("--codec-seed", o.codec_seed, "latent transform seed for the default ladder");
  cmd->add_option("--out", o.output, "output directory");
  cmd->add_option("--threads", o.threads, "worker threads (0 = auto)");
}

RunConfig build_config(const CliOptions& o, CLI::App* cmd) {
  RunConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw IoError("cannot open config " + o.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("config " + o.config_path + " is not valid JSON: " + ex.what());
    }
    c = run_config_from_json(j);
  }
  auto given = [cmd](const char* name) {
    const auto* opt = cmd->get_option_no_throw(name);
    return opt && opt->count() > 0;
  };
  if (given("--manifest")) {
    c.manifest = o.manifest;
    c.synthetic.reset();
  }
  if (given("--synthetic-task")) {
    c.synthetic = SyntheticSpec{parse_task(o.synthetic_task), o.count, o.seed};
    c.manifest.reset();
  } else if (c.synthetic) {
    if (given("--count")) c.synthetic->count = o.count;
    if (given("--seed")) c.synthetic->seed = o.seed;
  }
  if (given("--codec")) c.codec = parse_codec_kind(o.codec);
  if (given("--codec-seed")) c.codec_seed = o.codec_seed;
  if (given("--ladder")) {
    c.ladder = parse_ladder_spec(o.ladder);
    if (!given("--codec") && !c.ladder.empty()) c.codec = c.ladder.front().kind;
  }
  if (given("--metrics")) {
    c.metrics.clear();
    for (const auto& m : o.metrics) c.metrics.push_back(parse_metric(m));
  }
  if (given("--mode")) c.mode = parse_distortion_mode(o.mode);
  if (given("--predictions")) c.predictions = o.predictions;
  if (given("--out")) c.output = o.output;
  if (given("--threads")) c.threads = o.threads;

  if (given("--policy")) {
    std::ifstream in(o.policy_path);
    if (!in) throw IoError("cannot open policy " + o.policy_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("policy " + o.policy_path + " is not valid JSON: " + ex.what());
    }
    c.policy = policy_from_json(j);
  }
  if (given("--threshold")) {
    GatePolicy p = c.policy.value_or(GatePolicy{});
    p.threshold = *o.threshold;
    if (given("--metric")) p.metric = parse_metric(o.gate_metric);
    if (given("--ladder") || p.ladder.empty()) {
      p.ladder = given("--ladder") ? parse_ladder_spec(o.ladder) : c.resolved_ladder();
      if (!given("--ladder")) std::reverse(p.ladder.begin(), p.ladder.end());
    }
    if (given("--max-reencodes")) p.max_reencodes = o.max_reencodes;
    c.policy = p;
  } else if (c.policy) {
    if (given("--metric")) c.policy->metric = parse_metric(o.gate_metric);
    if (given("--max-reencodes")) c.policy->max_reencodes = o.max_reencodes;
  }
  return c;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"cfqa: compressed feature quality assessment"};
  app.require_subcommand(1);
  CliOptions o;

  auto* compress = app.add_subcommand("compress", "compress features along a rate ladder");
  auto* score = app.add_subcommand("score", "score reconstructions against their originals");
  auto* label = app.add_subcommand("label", "derive distortion labels");
  auto* evaluate = app.add_subcommand("evaluate", "correlate scores with labels");
  auto* simulate = app.add_subcommand("simulate", "simulate quality-gated transmission");
  auto* report = app.add_subcommand("report", "compress, score, label and evaluate");

  for (auto* cmd : {compress, score, label, evaluate, simulate, report}) add_input_options(cmd, o);
  for (auto* cmd : {score, report}) cmd->add_option("--metrics", o.metrics, "metrics to compute");
  for (auto* cmd : {label, report}) {
    cmd->add_option("--mode", o.mode, "consistency, annotation or injected");
    cmd->add_option("--predictions", o.predictions, "prediction directory");
  }
  simulate->add_option("--policy", o.policy_path, "gate policy (JSON)");
  simulate->add_option("--metric", o.gate_metric, "gate metric");
  simulate->add_option("--threshold", o.threshold, "gate threshold");
  simulate->add_option("--max-reencodes", o.max_reencodes, "cap on re-encodes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const RunConfig config = build_config(o, cmd);
    const std::string name = cmd->get_name();
    if (name == "compress") {
      const auto s = cmd_compress(config);
      std::cout << "compressed " << s.features << " features into " << s.records << " records\n";
    } else if (name == "score") {
      std::cout << "wrote " << cmd_score(config) << " scores\n";
    } else if (name == "label") {
      std::cout << "wrote " << cmd_label(config) << " labels\n";
    } else if (name == "evaluate") {
      std::cout << "evaluated " << cmd_evaluate(config).series << " series\n";
    } else if (name == "simulate") {
      const auto s = cmd_simulate(config);
      std::cout << "simulated " << s.features << " sessions, " << s.transmitted_bits << " bits transmitted\n";
    } else {
      std::cout << "evaluated " << cmd_report(config).series << " series\n";
    }
    return 0;
  } catch (const JoinError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cfqa

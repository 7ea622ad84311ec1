#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stripereid/cli/activations.hpp"
#include "stripereid/cli/commands.hpp"
#include "stripereid/cli/run_config.hpp"

using namespace stripereid;
using namespace stripereid::cli;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "stripereid");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> read_metrics(const fs::path& p) {
  std::map<std::string, std::string> m;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    m[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return m;
}

fs::path root() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "stripereid_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const std::vector<std::string> kSmallData{"--ids", "8", "--cams", "2", "--per", "4", "--height", "32", "--width", "16"};

std::vector<std::string> small_train_flags() {
  return {"--epochs", "2", "--p", "4", "--k", "4", "--global-dim", "16", "--drop-dim", "16", "--quiet"};
}

/// Dataset plus a trained checkpoint shared by the tests below.
const fs::path& trained_run() {
  static const fs::path dir = [] {
    const auto data = root() / "data";
    auto g = kSmallData;
    g.insert(g.begin(), {"gendata", "--out", data.string()});
    EXPECT_EQ(run_cli(g).code, 0);
    auto t = small_train_flags();
    t.insert(t.begin(), {"train", "--data", data.string(), "--out", (root() / "run").string(), "--rerank"});
    const auto r = run_cli(t);
    EXPECT_EQ(r.code, 0) << r.err;
    return root() / "run";
  }();
  return dir;
}

}  // namespace

TEST(RunConfig, MergesFileThenOverrides) {
  RunConfig rc({{"alpha", "1", ""}, {"names", "a,b", ""}, {"on", "false", "", true}, {"need", "", "", false, true}});
  EXPECT_THROW(rc.require_complete(), ConfigError);
  rc.merge_text("# comment\nalpha = 2.5\nneed = x  # trailing\n\non = true\n");
  EXPECT_DOUBLE_EQ(rc.get_double("alpha"), 2.5);
  EXPECT_EQ(rc.get("need"), "x");
  EXPECT_TRUE(rc.get_bool("on"));
  rc.set("alpha", "3");
  EXPECT_EQ(rc.get_int("alpha"), 3);
  EXPECT_NO_THROW(rc.require_complete());
  EXPECT_THROW(rc.get_int("names"), ConfigError);
}

TEST(RunConfig, UnknownKeysAndBadLinesAreReportedWithLocation) {
  RunConfig rc({{"alpha", "1", ""}});
  try {
    rc.merge_text("alpha = 1\nbeta = 2\n", "run.cfg");
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(rc.merge_text("alpha 1\n"), ConfigError);
  EXPECT_THROW(rc.set("gamma", "1"), ConfigError);
}

TEST(RunConfig, EchoRoundTrips) {
  RunConfig rc(train_schema());
  rc.set("data", "d");
  rc.set("out", "o");
  rc.set("milestones", "0.4,0.8");
  RunConfig again(train_schema());
  again.merge_text(rc.echo("train"));
  EXPECT_EQ(again.get_double_list("milestones"), (std::vector<double>{0.4, 0.8}));
  EXPECT_EQ(again.echo("train"), rc.echo("train"));
  EXPECT_EQ(flag_name("show_dropmask"), "--show-dropmask");
}

TEST(Summary, UsesSampleStandardDeviation) {
  const auto s = summarize("mAP", {1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(summarize("x", {0.7}).std, 0.0);
}

TEST(Cli, UnknownCommandsAndFlagsFail) {
  EXPECT_NE(run_cli({"frobnicate"}).code, 0);
  EXPECT_NE(run_cli({"gendata", "--out", (root() / "x").string(), "--colour", "red"}).code, 0);
  EXPECT_NE(run_cli({}).code, 0);
  const auto r = run_cli({"gendata"});
  EXPECT_NE(r.code, 0);
}

TEST(Gendata, IsDeterministicAndGuardsItsOutput) {
  auto args = [](const fs::path& out) {
    auto a = kSmallData;
    a.insert(a.begin(), {"gendata", "--out", out.string(), "--occlusion", "0.3", "--seed", "4"});
    return a;
  };
  const auto a = root() / "gen_a", b = root() / "gen_b";
  ASSERT_EQ(run_cli(args(a)).code, 0);
  ASSERT_EQ(run_cli(args(b)).code, 0);
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
  EXPECT_EQ(slurp(a / "images" / "5_1_2.ppm"), slurp(b / "images" / "5_1_2.ppm"));
  EXPECT_TRUE(fs::exists(a / kConfigEcho));

  const auto again = run_cli(args(a));
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  auto forced = args(a);
  forced.push_back("--force");
  EXPECT_EQ(run_cli(forced).code, 0);

  const auto foreign = root() / "foreign";
  fs::create_directories(foreign);
  std::ofstream(foreign / "keep.txt") << "x";
  auto f = args(foreign);
  f.push_back("--force");
  EXPECT_EQ(run_cli(f).code, 1);
  EXPECT_TRUE(fs::exists(foreign / "keep.txt"));

  EXPECT_EQ(run_cli({"gendata", "--out", (root() / "bad").string(), "--cams", "1"}).code, 1);
  EXPECT_FALSE(fs::exists(root() / "bad"));
}

TEST(Gendata, ConfigFileIsOverriddenByFlags) {
  const auto cfg = root() / "gen.cfg";
  std::ofstream(cfg) << "ids = 6\ncams = 3\nper = 2\nheight = 32\nwidth = 16\n";
  const auto out = root() / "gen_cfg";
  ASSERT_EQ(run_cli({"gendata", "--config", cfg.string(), "--out", out.string(), "--cams", "2"}).code, 0);
  EXPECT_EQ(synth::load_manifest(out / "manifest.csv").records.size(), 6u * 2u * 2u);
}

TEST(Train, WritesRunArtifacts) {
  const auto& run = trained_run();
  for (const char* f : {"checkpoint.ckpt", "history.csv", "results.csv", kConfigEcho}) EXPECT_TRUE(fs::exists(run / f)) << f;
  const auto history = slurp(run / "history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
  const auto metrics = read_metrics(run / "results.csv");
  EXPECT_TRUE(metrics.count("mAP"));
  EXPECT_TRUE(metrics.count("rerank_mAP"));
  EXPECT_NE(slurp(run / kConfigEcho).find("epochs = 2"), std::string::npos);
}

TEST(Train, MultipleSeedsWriteASummary) {
  const auto data = trained_run().parent_path() / "data";
  auto t = small_train_flags();
  t.insert(t.begin(), {"train", "--data", data.string(), "--out", (root() / "seeds").string(), "--seeds", "3,4",
                       "--variant", "no-reg", "--epochs", "1"});
  ASSERT_EQ(run_cli(t).code, 0);
  EXPECT_TRUE(fs::exists(root() / "seeds" / "seed_3" / "results.csv"));
  EXPECT_TRUE(fs::exists(root() / "seeds" / "seed_4" / "results.csv"));
  const auto summary = slurp(root() / "seeds" / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "metric,mean,std,n");
  EXPECT_NE(summary.find("\nmAP,"), std::string::npos);
}

TEST(Train, BadBatchSettingsLeaveNoOutput) {
  const auto data = trained_run().parent_path() / "data";
  auto t = small_train_flags();
  t.insert(t.begin(), {"train", "--data", data.string(), "--out", (root() / "bad_batch").string()});
  t.insert(t.end(), {"--p", "9"});  // the last occurrence wins
  EXPECT_EQ(run_cli(t).code, 1);
  EXPECT_FALSE(fs::exists(root() / "bad_batch"));
}

TEST(Eval, ReproducesTrainingMetricsAndLambdaOneMatchesRaw) {
  const auto& run = trained_run();
  const auto data = run.parent_path() / "data";
  const auto out = root() / "eval";
  ASSERT_EQ(run_cli({"eval", "--data", data.string(), "--checkpoint", (run / "checkpoint.ckpt").string(), "--out",
                     out.string(), "--rerank", "--lambda", "1"})
                .code,
            0);
  const auto m = read_metrics(out / "results.csv");
  EXPECT_EQ(m.at("mAP"), read_metrics(run / "results.csv").at("mAP"));
  EXPECT_EQ(m.at("rerank_mAP"), m.at("mAP"));
  EXPECT_EQ(m.at("rerank_rank1"), m.at("rank1"));

  const auto from_csv = root() / "eval_csv";
  ASSERT_EQ(run_cli({"eval", "--data", data.string(), "--query-embeddings", (out / "query_embeddings.csv").string(),
                     "--gallery-embeddings", (out / "gallery_embeddings.csv").string(), "--out", from_csv.string()})
                .code,
            0);
  EXPECT_EQ(read_metrics(from_csv / "results.csv").at("mAP"), m.at("mAP"));
}

TEST(Eval, MissingCheckpointWritesNothing) {
  const auto out = root() / "eval_missing";
  const auto r = run_cli({"eval", "--data", (root() / "data").string(), "--checkpoint", (root() / "nope.ckpt").string(),
                          "--out", out.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("does not exist"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Activations, DropMaskRowsAreTheMostRelevantRows) {
  const auto& run = trained_run();
  const auto out = root() / "act";
  ASSERT_EQ(run_cli({"activations", "--checkpoint", (run / "checkpoint.ckpt").string(), "--data",
                     (run.parent_path() / "data").string(), "--out", out.string(), "--limit", "3", "--show-dropmask"})
                .code,
            0);
  const auto model = train::load_model(run / "checkpoint.ckpt");
  const auto feature_h = model.config().backbone.output_shape().height;
  std::map<std::string, std::vector<std::pair<double, std::int64_t>>> relevance;
  std::map<std::string, std::vector<std::int64_t>> flagged;
  std::istringstream csv(slurp(out / "activations.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string name, row, rel, dropped;
    std::getline(ss, name, ',');
    std::getline(ss, row, ',');
    std::getline(ss, rel, ',');
    std::getline(ss, dropped, ',');
    relevance[name].emplace_back(std::stod(rel), std::stoll(row));
    if (dropped == "1") flagged[name].push_back(std::stoll(row));
  }
  ASSERT_EQ(relevance.size(), 3u);
  for (auto& [name, rows] : relevance) {
    for (const char* suffix : {"_activation.pgm", "_mask.pgm", "_overlay.ppm", "_dropmask.pgm"})
      EXPECT_TRUE(fs::exists(out / (name + suffix))) << name << suffix;
    const auto from_image = dropped_rows_from_image(read_pnm(out / (name + "_dropmask.pgm")), feature_h);
    EXPECT_EQ(from_image, flagged[name]);
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::int64_t> top;
    for (std::size_t i = 0; i < from_image.size(); ++i) top.push_back(rows[i].second);
    std::sort(top.begin(), top.end());
    EXPECT_EQ(from_image, top);
    EXPECT_EQ(static_cast<std::int64_t>(from_image.size()), topdrop::top_drop_count(feature_h, 0.3));
  }
}

TEST(Activations, ImageHelpers) {
  topdrop::ActivationMap flat{2, 2, {3.0, 3.0, 3.0, 3.0}};
  EXPECT_EQ(activation_image(flat, 4, 4).pixels, std::vector<std::uint8_t>(16, 255));
  topdrop::ActivationMap zero{2, 2, {0.0, 0.0, 0.0, 0.0}};
  EXPECT_EQ(activation_image(zero, 2, 2).pixels, std::vector<std::uint8_t>(4, 0));
  EXPECT_EQ(threshold_image(zero, 0.5, 2, 2).pixels, std::vector<std::uint8_t>(4, 0));
  topdrop::ActivationMap ramp{2, 1, {1.0, 4.0}};
  EXPECT_EQ(threshold_image(ramp, 0.5, 2, 1).pixels, (std::vector<std::uint8_t>{0, 255}));
  EXPECT_EQ(activation_image(ramp, 4, 1).pixels, (std::vector<std::uint8_t>{0, 0, 255, 255}));
  const topdrop::TopDropMask mask({1, 4, 1}, {1, 2});
  const auto img = drop_mask_image(mask, 8, 2);
  EXPECT_EQ(dropped_rows_from_image(img, 4), (std::vector<std::int64_t>{1, 2}));
}

TEST(Ablation, RunsEveryVariantWithPairedAugmentation) {
  const auto data = trained_run().parent_path() / "data";
  auto t = small_train_flags();
  t.insert(t.begin(), {"ablation", "--data", data.string(), "--out", (root() / "ablation").string(), "--seeds", "2",
                       "--epochs", "1"});
  ASSERT_EQ(run_cli(t).code, 0);
  std::istringstream runs(slurp(root() / "ablation" / "runs.csv"));
  std::string line;
  std::getline(runs, line);
  EXPECT_EQ(line, "variant,seed,map,rank1,augment_digest");
  std::set<std::string> digests;
  int rows = 0;
  while (std::getline(runs, line)) {
    ++rows;
    digests.insert(line.substr(line.rfind(',') + 1));
  }
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(digests.size(), 1u);
  const auto table = slurp(root() / "ablation" / "ablation.csv");
  for (const char* v : {"\nfull,", "\nno-drop,", "\nno-reg,", "\nbaseline-bdb,"}) EXPECT_NE(table.find(v), std::string::npos) << v;
}

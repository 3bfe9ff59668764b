#include <gtest/gtest.h>

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "qbv/audio_io.hpp"
#include "qbv/checkpoint.hpp"
#include "qbv/manifest.hpp"
#include "qbv/qbve.hpp"
#include "qbv/retrieval.hpp"
#include "qbv/service.hpp"
#include "test_util.hpp"

using namespace qbv;
using namespace qbv::test;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun qbv_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qbv");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

QbveBlock read_qbve_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return read_qbve_block(in);
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = dir_.path / "tiny.cfg";
    std::ofstream(config_) << "sample_rate = 8000\nduration = 0.25\nwindow = 256\nhop = 128\nn_mels = 16\n"
                              "f_max = 4000\nchannels = 4,4,8\nbatch_size = 4\nepochs = 2\nwarmup_epochs = 1\n"
                              "constant_epochs = 1\ndecay_epochs = 0\nfinetune_epochs = 0\nmax_shift = 200\n"
                              "max_time_mask = 2\nmax_freq_mask = 1\ncqt_octaves = 6\ncqt_hop = 128\n";
    data_ = dir_.path / "syn";
    const CliRun gen = qbv_cli({"--config", config_.string(), "gen-synthetic", "--out", data_.string(), "--classes", "6",
                             "--imitations", "2", "--folds", "3"});
    ASSERT_EQ(gen.code, 0) << gen.err;
    manifest_ = data_ / "manifest.jsonl";
  }

  std::vector<std::string> with_config(std::vector<std::string> args) const {
    args.insert(args.begin(), {"--config", config_.string()});
    return args;
  }

  TempDir dir_;
  std::filesystem::path config_, data_, manifest_;
};

}  // namespace

TEST_F(Cli, TrainWritesMetricsCsvAndCheckpoint) {
  const auto ckpt = dir_.path / "model.qbve";
  const auto csv = dir_.path / "metrics.csv";
  const CliRun r = qbv_cli({"train", "--manifest", manifest_.string(), "--config", config_.string(), "--out",
                            ckpt.string(), "--metrics", csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(ckpt));
  const auto rows = lines(read_text(csv));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "epoch,loss,val_mrr,lr");
  EXPECT_EQ(rows[1].substr(0, 2), "0,");
  EXPECT_EQ(rows[2].substr(0, 2), "1,");
  const QbvModel m = load_checkpoint(ckpt);
  EXPECT_EQ(m.features.sample_rate(), 8000);

  // appending keeps a single header
  ASSERT_EQ(qbv_cli(with_config({"train", "--manifest", manifest_.string(), "--out", ckpt.string(), "--metrics",
                                 csv.string(), "--validation", "none"}))
                .code,
            0);
  const auto again = lines(read_text(csv));
  EXPECT_EQ(again.size(), 5u);
  EXPECT_EQ(std::count(again.begin(), again.end(), "epoch,loss,val_mrr,lr"), 1);
}

TEST_F(Cli, QueryOutputMatchesServiceRanking) {
  const auto ckpt = dir_.path / "model.qbve";
  const auto index = dir_.path / "index.qbve";
  ASSERT_EQ(qbv_cli(with_config({"train", "--manifest", manifest_.string(), "--out", ckpt.string()})).code, 0);
  const CliRun idx = qbv_cli(with_config({"index", "--manifest", manifest_.string(), "--out", index.string(),
                                       "--backend", "encoder", "--checkpoint", ckpt.string()}));
  ASSERT_EQ(idx.code, 0) << idx.err;

  const Manifest manifest = read_manifest(manifest_);
  const auto query_path = manifest.resolve(manifest.imitations[3].path);
  const CliRun q = qbv_cli(with_config({"query", query_path.string(), "--index", index.string(), "--checkpoint",
                                     ckpt.string(), "--k", "4"}));
  ASSERT_EQ(q.code, 0) << q.err;

  SearchService service;
  auto featurizer = std::make_shared<EncoderFeaturizer>(load_checkpoint(ckpt));
  service.add_backend("encoder", load_index(index, Backend::encoder), featurizer);
  std::ifstream in(query_path, std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const QueryResponse expected = service.handle_query(bytes, 4, "encoder");

  const auto rows = lines(q.out);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    std::ostringstream line;
    line << (i + 1) << '\t' << expected.results[i].id << '\t' << std::fixed << std::setprecision(6)
         << expected.results[i].score;
    EXPECT_EQ(rows[i], line.str());
  }

  const CliRun js = qbv_cli(with_config({"query", query_path.string(), "--index", index.string(), "--checkpoint",
                                      ckpt.string(), "--k", "4", "--json"}));
  ASSERT_EQ(js.code, 0);
  const auto j = nlohmann::json::parse(js.out);
  ASSERT_EQ(j["results"].size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(j["results"][i]["id"], expected.results[i].id);
}

TEST_F(Cli, TwoDftIndexSelfQuery) {
  const auto index = dir_.path / "twodft.qbve";
  ASSERT_EQ(qbv_cli(with_config({"index", "--manifest", manifest_.string(), "--out", index.string(), "--backend",
                                 "twodft"}))
                .code,
            0);
  const Manifest manifest = read_manifest(manifest_);
  const QbveBlock block = read_qbve_file(index);
  EXPECT_EQ(block.ids.size(), 6u);
  for (const auto& ref : manifest.references) {
    const CliRun q = qbv_cli(with_config({"query", manifest.resolve(ref.path).string(), "--index", index.string(),
                                       "--k", "1"}));
    ASSERT_EQ(q.code, 0) << q.err;
    EXPECT_EQ(q.out.substr(0, q.out.find('\t', 2)), "1\t" + ref.id);
  }
}

TEST_F(Cli, FeaturesAndEval) {
  const Manifest manifest = read_manifest(manifest_);
  const auto wav = manifest.resolve(manifest.references[0].path);
  for (const std::string kind : {"logmel", "cqt", "2dft"}) {
    const auto out = dir_.path / (kind + ".qbve");
    const CliRun r = qbv_cli(with_config({"features", wav.string(), "--kind", kind, "--out", out.string()}));
    ASSERT_EQ(r.code, 0) << r.err;
    const QbveBlock b = read_qbve_file(out);
    if (kind == "logmel") {
      EXPECT_EQ(b.dim, 16u);
      EXPECT_EQ(b.ids.size(), 14u);
      EXPECT_EQ(b.ids[0], "frame_00000");
    }
    if (kind == "2dft") EXPECT_EQ(b.ids, std::vector<std::string>{manifest.references[0].id});
  }
  const auto json = dir_.path / "report.json";
  const CliRun ev = qbv_cli(with_config({"eval", "fine", "--manifest", manifest_.string(), "--backend", "twodft",
                                      "--no-split", "--json", json.string()}));
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("MRR"), std::string::npos);
  const auto j = nlohmann::json::parse(read_text(json));
  EXPECT_EQ(j["backend"], "twodft");
  EXPECT_GT(j["mrr"].get<double>(), 0.0);
}

TEST(CliErrors, UsageAndValidation) {
  EXPECT_NE(qbv_cli({}).code, 0);
  EXPECT_NE(qbv_cli({"bogus"}).code, 0);
  const CliRun missing = qbv_cli({"train"});
  EXPECT_NE(missing.code, 0);
  EXPECT_NE(missing.err.find("--manifest"), std::string::npos);
  const CliRun nofile = qbv_cli({"query", "/nonexistent.wav", "--index", "/nonexistent.qbve"});
  EXPECT_NE(nofile.code, 0);
  EXPECT_EQ(qbv_cli({"--help"}).code, 0);
}

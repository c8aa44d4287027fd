/* Copyright 2026 The stylectl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <sstream>

#include "stylectl/cli.hpp"
#include "test_support.hpp"

namespace stylectl {
namespace {

using nlohmann::json;
using testing::TempDir;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "stylectl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json last_json_line(const std::string& text) {
  std::istringstream is(text);
  std::string line, last;
  while (std::getline(is, line))
    if (!line.empty()) last = line;
  return json::parse(last);
}

class CliTest : public ::testing::Test {
 protected:
  CliTest() {
    std::mt19937_64 rng(1);
    write_png(dir_ / "src.png", render_face(random_face(StyleFamily::Photo, rng), 32));
    write_png(dir_ / "ref.png", render_face(random_face(StyleFamily::Comic, rng), 32));
    write_png(dir_ / "ref2.png", render_face(random_face(StyleFamily::Ink, rng), 32));
    Mask top(32, 32);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 32; ++x) top.at(y, x) = 1;
    save_mask(dir_ / "top.png", top);
  }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> fast() const {
    return {"--image-size", "32", "--steps", "6", "--sac-start", "4", "--layer-gate", "all"};
  }

  std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) const {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  TempDir dir_;
};

TEST_F(CliTest, StylizeWritesOutput) {
  const CliRun r = run(with({"--json", "stylize", "--source", p("src.png"), "--reference",
                             p("ref.png"), "--out", p("out.png")},
                            fast()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("untrained"), std::string::npos);
  const json j = last_json_line(r.out);
  EXPECT_EQ(j.at("event"), "result");
  EXPECT_EQ(j.at("config").at("steps"), 6);
  const Image out = read_image(p("out.png"));
  EXPECT_EQ(out.width(), 32);
  EXPECT_EQ(out.channels(), 3);
}

TEST_F(CliTest, StylizeMatchesLibrary) {
  ASSERT_EQ(run(with({"stylize", "--source", p("src.png"), "--reference", p("ref.png"), "--out",
                      p("out.png")},
                     fast()))
                .code,
            0);
  const ToyUNet model = toy_backend(32, 3, 0);
  StylizeRequest req;
  req.source = read_image(p("src.png"));
  req.reference = read_image(p("ref.png"));
  req.cfg = testing::fast_config();
  req.cfg.layer_gate = LayerGate::all();
  const Image expect = quantize8(stylize_fitted(req, model, *model.codec()).output);
  EXPECT_EQ(read_image(p("out.png")), expect);
}

TEST_F(CliTest, StylizeDefaultFlags) {
  const CliRun r = run({"stylize", "--source", p("src.png"), "--reference", p("ref.png"), "--out",
                        p("out.png"), "--image-size", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("wrote"), std::string::npos);
}

TEST_F(CliTest, StylizeMaskedCop) {
  const CliRun r = run(with({"stylize", "--source", p("src.png"), "--reference", p("ref.png"),
                             "--out", p("out.png"), "--source-mask", p("top.png"), "--cop"},
                            fast()));
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({"stylize", "--source", p("src.png"), "--out", p("out.png")}).code, 2);
  EXPECT_EQ(run({"stylize", "--source", p("nope.png"), "--reference", p("ref.png"), "--out",
                 p("out.png")})
                .code,
            2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  EXPECT_EQ(run(with({"stylize", "--source", p("src.png"), "--reference", p("ref.png"), "--out",
                      p("out.png")},
                     {"--image-size", "32", "--steps", "6", "--sac-start", "9"}))
                .code,
            2);
  EXPECT_EQ(run(with({"stylize", "--source", p("src.png"), "--reference", p("ref.png"), "--out",
                      p("out.png")},
                     {"--layer-gate", "decoder"}))
                .code,
            2);
  EXPECT_EQ(run({"stylize", "--source", p("src.png"), "--reference", p("ref.png"), "--out",
                 p("out.png"), "--omega", "-1"})
                .code,
            2);
}

TEST_F(CliTest, HelpExitsZero) {
  const CliRun r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("stylize"), std::string::npos);
}

TEST_F(CliTest, ExternalBackendIsCapabilityFailure) {
  const CliRun r = run({"stylize", "--source", p("src.png"), "--reference", p("ref.png"), "--out",
                        p("out.png"), "--backend", "external"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("adapter"), std::string::npos);
}

TEST_F(CliTest, ChainWorkflow) {
  const std::string s = p("session");
  ASSERT_EQ(run({"chain", "init", "--session", s, "--source", p("src.png")}).code, 0);
  ASSERT_EQ(run(with({"chain", "step", "--session", s, "--reference", p("ref.png")}, fast())).code,
            0);
  const CliRun masked = run(with({"chain", "step", "--session", s, "--reference", p("ref2.png"),
                                  "--mask", p("top.png"), "--out", p("head.png")},
                                 fast()));
  ASSERT_EQ(masked.code, 0) << masked.err;
  EXPECT_TRUE(std::filesystem::exists(p("head.png")));

  json status = last_json_line(run({"--json", "chain", "status", "--session", s}).out);
  EXPECT_EQ(status.at("steps").size(), 2u);
  EXPECT_FALSE(status.at("steps")[1].at("mask").is_null());
  EXPECT_EQ(status.at("steps")[1].at("cfg").at("sac_start"), 4);

  ASSERT_EQ(run({"chain", "revert", "--session", s, "--to", "0"}).code, 0);
  status = last_json_line(run({"--json", "chain", "status", "--session", s}).out);
  EXPECT_EQ(status.at("steps").size(), 1u);
  EXPECT_EQ(status.at("head"), status.at("steps")[0].at("output"));

  ASSERT_EQ(run({"chain", "export", "--session", s, "--out", p("export.png")}).code, 0);
  const Bytes exported = read_file_bytes(p("export.png"));
  EXPECT_EQ(sha256_hex(exported), status.at("head"));
}

TEST_F(CliTest, ChainErrors) {
  const std::string s = p("session");
  EXPECT_EQ(run({"chain", "status", "--session", p("missing")}).code, 1);
  ASSERT_EQ(run({"chain", "init", "--session", s, "--source", p("src.png")}).code, 0);
  EXPECT_EQ(run({"chain", "init", "--session", s, "--source", p("src.png")}).code, 1);
  EXPECT_EQ(run({"chain", "revert", "--session", s, "--to", "0"}).code, 1);
  EXPECT_EQ(run({"chain", "step", "--session", s}).code, 2);
}

TEST_F(CliTest, TrainToyAndResume) {
  const std::vector<std::string> common = {"--image-size", "32", "--dataset-size", "8", "--batch",
                                           "2", "--log-every", "1"};
  const CliRun straight =
      run(with({"--json", "train-toy", "--out", p("a.ckpt"), "--steps", "4"}, common));
  ASSERT_EQ(straight.code, 0) << straight.err;
  ASSERT_EQ(run(with({"train-toy", "--out", p("b.ckpt"), "--steps", "2"}, common)).code, 0);
  const CliRun resumed = run(with(
      {"--json", "train-toy", "--out", p("c.ckpt"), "--steps", "2", "--resume", p("b.ckpt")},
      common));
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  const json a = last_json_line(straight.out), c = last_json_line(resumed.out);
  EXPECT_EQ(c.at("trainer_step"), 4);
  EXPECT_EQ(a.at("weights_digest"), c.at("weights_digest"));

  const CliRun use = run(with({"stylize", "--source", p("src.png"), "--reference", p("ref.png"),
                               "--out", p("out.png"), "--checkpoint", p("c.ckpt")},
                              {"--steps", "6", "--sac-start", "4"}));
  EXPECT_EQ(use.code, 0) << use.err;
  EXPECT_EQ(use.err.find("untrained"), std::string::npos);
}

TEST_F(CliTest, TrainToyRejectsZeroSteps) {
  EXPECT_EQ(run({"train-toy", "--out", p("x.ckpt"), "--steps", "0"}).code, 2);
  EXPECT_FALSE(std::filesystem::exists(p("x.ckpt")));
}

TEST_F(CliTest, MetricsIdenticalTriple) {
  const CliRun r = run({"--json", "metrics", "--output-image", p("src.png"), "--source",
                        p("src.png"), "--reference", p("src.png")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = last_json_line(r.out);
  EXPECT_EQ(j.at("mean_style_loss"), 0.0);
  EXPECT_NEAR(j.at("mean_id_similarity").get<double>(), 1.0, 1e-12);
}

TEST_F(CliTest, MetricsPairListMatchesLibrary) {
  {
    std::ofstream f(p("pairs.txt"));
    f << "# id,output,source,reference\n"
      << "a,ref.png,src.png,ref2.png\n"
      << "b,ref2.png,src.png,ref.png\n";
  }
  const CliRun r = run({"metrics", "--pairs", p("pairs.txt"), "--out", p("report.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  PixelPyramidExtractor ex;
  ThumbnailEmbedder em;
  const std::vector<MetricPair> pairs = {
      {"a", read_image(p("ref.png")), read_image(p("src.png")), read_image(p("ref2.png"))},
      {"b", read_image(p("ref2.png")), read_image(p("src.png")), read_image(p("ref.png"))}};
  const std::string expect = report_to_csv(evaluate_batch(pairs, &ex, &em));
  EXPECT_EQ(r.out, expect);
  const Bytes written = read_file_bytes(p("report.csv"));
  EXPECT_EQ(std::string(written.begin(), written.end()), expect);
}

TEST_F(CliTest, MetricsUsageErrors) {
  {
    std::ofstream f(p("empty.txt"));
    f << "# nothing here\n";
  }
  EXPECT_EQ(run({"metrics", "--pairs", p("empty.txt")}).code, 2);
  EXPECT_EQ(run({"metrics", "--source", p("src.png")}).code, 2);
  {
    std::ofstream f(p("short.txt"));
    f << "a,ref.png\n";
  }
  EXPECT_EQ(run({"metrics", "--pairs", p("short.txt")}).code, 2);
  EXPECT_EQ(run({"metrics", "--output-image", p("src.png"), "--source", p("src.png"), "--reference",
                 p("src.png"), "--extractor", "vgg"})
                .code,
            1);
}

TEST_F(CliTest, ConfigFileFlags) {
  {
    std::ofstream f(p("cfg.ini"));
    f << "[stylize]\nsteps=6\nsac-start=4\nimage-size=32\n";
  }
  const CliRun r = run({"--config", p("cfg.ini"), "--json", "stylize", "--source", p("src.png"),
                        "--reference", p("ref.png"), "--out", p("out.png")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(last_json_line(r.out).at("config").at("steps"), 6);
}

}  // namespace
}  // namespace stylectl

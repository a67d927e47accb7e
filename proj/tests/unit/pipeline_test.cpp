#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <regex>
#include <set>
#include <sstream>

#include "trinity/data/world.hpp"
#include "trinity/error.hpp"
#include "trinity/pipeline/config.hpp"
#include "trinity/pipeline/pipeline.hpp"
#include "trinity/pipeline/plot.hpp"

namespace pipeline = trinity::pipeline;
namespace data = trinity::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("trinity-pipeline-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

data::ClipRecord record_of(const data::Video& v) { return data::to_record(v, "v", "test"); }

}  // namespace

TEST(PipelineConfig, DefaultAlphaPerMode) {
  EXPECT_EQ(pipeline::PipelineConfig::default_alpha(trinity::model::Mode::kContextual), 0.3);
  EXPECT_EQ(pipeline::PipelineConfig::default_alpha(trinity::model::Mode::kContextFree), 0.7);
}

TEST(PipelineConfig, DocumentRoundTrip) {
  pipeline::PipelineConfig c;
  c.seed = 7;
  c.data.train_clips = 33;
  c.data.world.event_focus = 0.25;
  c.model.mode = trinity::model::Mode::kContextFree;
  c.scoring.alpha = 0.7;
  c.train.learning_rate = 1e-3;
  c.motion.use_gt_flow = true;
  const auto text = c.to_document().to_string();
  const auto back =
      pipeline::PipelineConfig::from_document(trinity::KvDocument::parse(text, "config"));
  EXPECT_EQ(back.to_document().to_string(), text);
  EXPECT_EQ(back.seed, 7u);
  EXPECT_EQ(back.data.world.event_focus, 0.25);
  EXPECT_TRUE(back.motion.use_gt_flow);

  const auto dir = scratch("config");
  c.save(dir / "config.txt");
  EXPECT_EQ(pipeline::PipelineConfig::load(dir / "config.txt").to_document().to_string(), text);
  fs::remove_all(dir);
}

TEST(PipelineConfig, InconsistentSettingsRejected) {
  pipeline::PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.scoring.alpha = 1.5;
  EXPECT_THROW(c.validate(), trinity::ConfigError);
  c = {};
  c.train.batch_size = 1;
  EXPECT_THROW(c.validate(), trinity::ConfigError);
  c = {};
  c.data.clip_frames = 5;
  EXPECT_THROW(c.validate(), trinity::ConfigError);
  EXPECT_THROW(trinity::KvDocument::parse("trinity-dataset 1\n", "x").expect("trinity-config", 1),
               trinity::FormatError);
}

TEST(Samples, SlidingWindowsAndStaticMotion) {
  const data::WorldConfig world;
  const trinity::model::ModelConfig mc;
  pipeline::MotionOptions motion;
  motion.use_gt_flow = true;
  // 3 a.m.: nobody on screen.
  const auto rec = record_of(data::generate_video(world, {0, 3, 0, 0}, 7, 1));
  auto samples = pipeline::make_samples(rec, 64, 64, mc, motion);
  ASSERT_EQ(samples.size(), 4u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.frames.size(), 4u * 64 * 64);
    EXPECT_EQ(s.context, rec.context);
    ASSERT_EQ(s.hof.size(), 16u * 25);
    // All background: only the background-fraction channel is set.
    for (std::size_t i = 0; i < s.hof.size(); ++i) EXPECT_EQ(s.hof[i], i % 25 == 12 ? 1.0 : 0.0);
  }
  EXPECT_EQ(samples[1].frames[0], rec.pixels[64 * 64]);

  std::vector<double> entries(3 * 25, 0.0);
  entries[12] = 1.0;
  entries[25] = 1.0;
  entries[2 * 25 + 3] = 1.0;
  const trinity::vq::Codebook book(3, 25, entries);
  pipeline::assign_tokens(samples, book);
  const std::set<std::size_t> q(samples[0].q.begin(), samples[0].q.end());
  EXPECT_EQ(q, std::set<std::size_t>{0});
  for (const auto& s : samples) {
    EXPECT_EQ(s.q, samples[0].q);
    EXPECT_EQ(s.err, samples[0].err);
  }
}

TEST(Samples, MovingPatchesLeaveTheStaticToken) {
  const data::WorldConfig world;
  const trinity::model::ModelConfig mc;
  pipeline::MotionOptions motion;
  motion.use_gt_flow = true;
  const auto calm = pipeline::make_samples(
      record_of(data::generate_video(world, {0, 3, 0, 0}, 4, 1)), 64, 64, mc, motion);
  const auto odd = pipeline::make_samples(
      record_of(data::generate_video(world, {0, 9, 0, 0}, 4, 2,
                                     {data::AnomalyKind::kUnseenMotion, 0, 4})),
      64, 64, mc, motion);
  // Codebook: the static feature plus every moving patch of the odd clip.
  std::vector<double> entries(25, 0.0);
  entries[12] = 1.0;
  std::size_t moving = 0;
  for (std::size_t p = 0; p < 16; ++p) {
    if (odd[0].hof[p * 25 + 12] == 1.0) continue;
    ++moving;
    entries.insert(entries.end(), odd[0].hof.begin() + static_cast<long>(p * 25),
                   odd[0].hof.begin() + static_cast<long>((p + 1) * 25));
  }
  ASSERT_GT(moving, 0u);
  const trinity::vq::Codebook book(moving + 1, 25, entries);
  std::vector<pipeline::ClipSample> a(calm.begin(), calm.end()), b(odd.begin(), odd.end());
  pipeline::assign_tokens(a, book);
  pipeline::assign_tokens(b, book);
  std::size_t changed = 0;
  for (std::size_t p = 0; p < 16; ++p) changed += a[0].q[p] != b[0].q[p];
  EXPECT_EQ(changed, moving);
}

TEST(Plot, ConstantScoresDrawAFlatLineAtOneHalf) {
  pipeline::ClipScores clips;
  clips.psnr.assign(6, 30.0);
  clips.misalign.assign(6, 0.4);
  const auto tl = pipeline::video_timeline(clips, 4, pipeline::AuxScore::kLocal, 0.7, 17);
  ASSERT_EQ(tl.size(), 9u);
  for (double s : tl.normalcy) EXPECT_EQ(s, 0.5);

  const auto dir = scratch("plot");
  pipeline::write_score_csv(dir / "v.csv", tl);
  const std::string svg = pipeline::plot_csv(dir / "v.csv");
  const std::regex line("<polyline class=\"series\" data-name=\"S\"[^>]*points=\"([^\"]*)\"");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, line));
  std::istringstream pts(m[1].str());
  std::string pt;
  std::size_t n = 0;
  while (pts >> pt) {
    const double y = std::stod(pt.substr(pt.find(',') + 1));
    EXPECT_NEAR(y, 176.0, 1e-6);  // middle of the [0, 1] axis
    ++n;
  }
  EXPECT_EQ(n, 9u);
  EXPECT_EQ(svg.find("class=\"anomaly\""), std::string::npos);
  fs::remove_all(dir);
}

TEST(Plot, RocCsvPicksRocPlot) {
  const auto dir = scratch("roc");
  trinity::eval::RocResult roc;
  roc.points = {{0.0, 0.0, 1.0}, {0.5, 1.0, 0.5}, {1.0, 1.0, 0.0}};
  pipeline::write_roc_csv(dir / "roc.csv", roc);
  const std::string svg = pipeline::plot_csv(dir / "roc.csv");
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(svg.find("data-name=\"roc\""), std::string::npos);
  fs::remove_all(dir);
}

TEST(Csv, ParseAndReject) {
  const auto t = pipeline::parse_csv("a,b\n1,2\n3,\n", "t");
  EXPECT_EQ(t.columns, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.column("a"), (std::vector<double>{1, 3}));
  EXPECT_TRUE(std::isnan(t.column("b")[1]));
  EXPECT_FALSE(t.has("c"));
  EXPECT_THROW(t.column("c"), trinity::FormatError);
  EXPECT_THROW(pipeline::parse_csv("a,b\n1,2,3\n", "t"), trinity::FormatError);
  EXPECT_THROW(pipeline::parse_csv("a\nx\n", "t"), trinity::FormatError);
}

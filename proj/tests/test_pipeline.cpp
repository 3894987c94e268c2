#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "trajctl/export_io.hpp"
#include "trajctl/pipeline.hpp"

using namespace trajctl;
using testutil::thrown_code;
using testutil::thrown_message;
namespace fs = std::filesystem;

namespace {

const char* kWalkthroughTrajectory = R"({
  "frames": 2,
  "mode": "perframe",
  "boxes": [[0, 0, 0, 2, 2], [1, 2, 2, 4, 4]]
})";

// 2x4x4 token lattice, 12-step schedule, no exports: the cross-module
// walkthrough scenario.
PipelineConfig small_config(const std::string& dir) {
  fs::create_directories(dir);
  const std::string traj_path = dir + "/traj.json";
  write_text_file(traj_path, kWalkthroughTrajectory);

  PipelineConfig cfg;
  cfg.latent.frames = 2;
  cfg.latent.height = 8;
  cfg.latent.width = 8;
  cfg.latent.patch = 2;
  cfg.latent.pixel_frames = 2;
  cfg.latent.pixel_height = 8;
  cfg.latent.pixel_width = 8;
  cfg.rope = RopeLayout::default_split(16);
  cfg.schedule.total_steps = 12;
  cfg.schedule.t_a = 8;
  cfg.schedule.t_b = 3;
  cfg.schedule.anchor_mode = AnchorMode::kMinBox;
  cfg.trajectory_path = traj_path;
  cfg.prompt = "A red car turning around on a countryside road";
  cfg.exports.report = false;
  cfg.out_dir = dir;
  return cfg;
}

std::string strip_timings(const std::string& report_json) {
  nlohmann::json doc = nlohmann::json::parse(report_json);
  doc.erase("timings");
  return doc.dump(2);
}

}  // namespace

TEST_CASE("config document parsing") {
  const std::string good = R"({
    "latent": {"frames": 2, "height": 8, "width": 8, "patch": 2},
    "schedule": {"steps": 12, "t_a": 8, "t_b": 3},
    "trajectory": "traj.json",
    "prompt": "A red car on a road"
  })";
  const PipelineConfig cfg = parse_config(good, "/base/dir");
  CHECK(cfg.latent.frames == 2);
  CHECK(cfg.schedule.total_steps == 12);
  CHECK(cfg.schedule.t_a == 8);
  CHECK(cfg.schedule.t_b == 3);
  CHECK(cfg.schedule.cfg_scale == 5.0);  // paper-default guidance scale
  CHECK(cfg.trajectory_path == "/base/dir/traj.json");
  CHECK(cfg.client == "stub");
  CHECK(cfg.precision == Precision::kFloat64);
  // Default rotary split for head_dim 16.
  CHECK(cfg.rope.channels_t == 4);
  CHECK(cfg.rope.channels_y == 6);
  CHECK(cfg.rope.channels_x == 6);
  CHECK(cfg.exports.report);
  CHECK(cfg.exports.csv);

  // Absolute trajectory paths are kept as-is.
  const std::string abs = R"({
    "latent": {"frames": 2, "height": 8, "width": 8, "patch": 2},
    "trajectory": "/elsewhere/traj.json",
    "prompt": "A red car"
  })";
  CHECK(parse_config(abs, "/base").trajectory_path == "/elsewhere/traj.json");
}

// Wraps a fragment in a document that carries the required fields, so each
// case below states only what it breaks. Semantic errors surface in
// validate(), structural ones already at parse time; both are ConfigError.
static std::string with_required(const std::string& extra) {
  std::string doc =
      R"({"latent": {"frames": 2, "height": 8, "width": 8, "patch": 2},)"
      R"( "trajectory": "t.json", "prompt": "p")";
  if (!extra.empty()) doc += ", " + extra;
  return doc + "}";
}

TEST_CASE("config documents are strictly validated") {
  auto code = [](const std::string& extra) {
    return thrown_code([&] { parse_config(with_required(extra)).validate(); });
  };
  auto raw_code = [](const std::string& text) {
    return thrown_code([&] { parse_config(text).validate(); });
  };

  CHECK(raw_code("{ not json") == ErrorCode::ConfigError);
  CHECK(raw_code(R"({"latent": {"frames": 2, "height": 8, "width": 8,
                                "patch": 2},
                     "prompt": "p"})") == ErrorCode::ConfigError);
  CHECK(raw_code(R"({"latent": {"frames": 2, "height": 8, "width": 8,
                                "patch": 2},
                     "trajectory": "t.json"})") == ErrorCode::ConfigError);
  CHECK(raw_code(R"({"trajectory": "t.json", "prompt": "p"})") ==
        ErrorCode::ConfigError);  // latent is required

  CHECK(code(R"("wild": 1)") == ErrorCode::ConfigError);
  CHECK(code(R"("schedule": {"steps": 10, "t_a": 11})") ==
        ErrorCode::ConfigError);
  CHECK(code(R"("schedule": {"cfg_scale": -1})") == ErrorCode::ConfigError);
  CHECK(code(R"("schedule": {"anchor": "center"})") == ErrorCode::ConfigError);
  CHECK(code(R"("schedule": {"steps": "many"})") == ErrorCode::ConfigError);
  CHECK(code(R"("precision": "float16")") == ErrorCode::ConfigError);
  CHECK(code(R"("exports": {"formats": ["csv", "bmp"]})") ==
        ErrorCode::ConfigError);
  CHECK(code(R"("client": "imaginary")") == ErrorCode::ConfigError);
  CHECK(code(R"("client": "remote")") == ErrorCode::ConfigError);  // no endpoint
  CHECK(code(R"("model": {"heads": 5})") == ErrorCode::ConfigError);
  CHECK(code(R"("model": {"qk_alignment": 2.0})") == ErrorCode::ConfigError);
  CHECK(code(R"("schema_version": 2)") == ErrorCode::ConfigError);

  const std::string nested_unknown =
      R"({"latent": {"frames": 2, "height": 8, "width": 8,
                     "patch": 2, "surprise": true},
          "trajectory": "t.json", "prompt": "p"})";
  CHECK(raw_code(nested_unknown) == ErrorCode::ConfigError);

  // t_b may exceed t_a: the two gates are independent.
  const PipelineConfig swapped =
      parse_config(with_required(R"("schedule": {"steps": 10, "t_a": 2, "t_b": 9})"));
  CHECK_NOTHROW(swapped.validate());
}

TEST_CASE("anchor spelling variants") {
  auto anchor_of = [](const std::string& name) {
    return parse_config(with_required(R"("schedule": {"anchor": ")" + name +
                                      R"("})"))
        .schedule.anchor_mode;
  };
  CHECK(anchor_of("random") == AnchorMode::kRandom);
  CHECK(anchor_of("min_box") == AnchorMode::kMinBox);
  CHECK(anchor_of("min-box") == AnchorMode::kMinBox);
}

TEST_CASE("gate flags follow the schedule") {
  const PipelineConfig cfg = small_config("pipe_out/gates");
  const RunResult result = run_pipeline(cfg);
  REQUIRE(result.report.steps.size() == 12);
  for (const StepRecord& s : result.report.steps) {
    CHECK(s.std_active == (s.step < 3));
    CHECK(s.sg_active == (s.step < 8));
    REQUIRE(s.fg_score.has_value());
    CHECK(*s.fg_score > 0.0);
  }
  CHECK(result.report.final_feature_hash ==
        result.report.steps.back().feature_hash);
}

TEST_CASE("walkthrough set sizes land in the report") {
  const PipelineConfig cfg = small_config("pipe_out/sets");
  const RunResult result = run_pipeline(cfg);
  // Areas tie at 4, so the min-box anchor is frame 0.
  CHECK(result.report.anchor_frame == 0);
  CHECK(result.report.fg_count == 8);
  CHECK(result.report.repeat_count == 8);
  CHECK(result.report.r_count == 4);
  CHECK(result.report.repeat_per_frame == std::vector<std::size_t>{0, 8});
  CHECK_FALSE(result.report.std_noop);
  CHECK(result.report.precision == "float64");
  CHECK(result.report.prompts.original == cfg.prompt);
  CHECK_FALSE(result.report.prompts.foreground.empty());
  CHECK_FALSE(result.report.prompts.background.empty());
}

TEST_CASE("closed gates reproduce the baseline bit for bit") {
  PipelineConfig cfg = small_config("pipe_out/baseline");
  cfg.schedule.t_a = 0;
  cfg.schedule.t_b = 0;
  const RunResult gated = run_pipeline(cfg);
  const RunResult baseline = run_baseline(cfg);
  CHECK(gated.features.tokens.data == baseline.features.tokens.data);
  CHECK(gated.report.final_feature_hash == baseline.report.final_feature_hash);
  REQUIRE(gated.report.steps.size() == baseline.report.steps.size());
  for (std::size_t i = 0; i < gated.report.steps.size(); ++i) {
    CHECK(gated.report.steps[i].feature_hash ==
          baseline.report.steps[i].feature_hash);
  }

  // Opening either gate changes the trajectory of features.
  PipelineConfig open = small_config("pipe_out/baseline");
  open.schedule.t_a = 8;
  open.schedule.t_b = 0;
  CHECK(run_pipeline(open).report.final_feature_hash !=
        baseline.report.final_feature_hash);
}

TEST_CASE("static trajectories make the transform a no-op") {
  const std::string dir = "pipe_out/static";
  PipelineConfig cfg = small_config(dir);
  write_text_file(dir + "/static.json", R"({
    "frames": 2,
    "mode": "perframe",
    "boxes": [[0, 1, 1, 3, 3], [1, 1, 1, 3, 3]]
  })");
  cfg.trajectory_path = dir + "/static.json";
  const RunResult result = run_pipeline(cfg);
  CHECK(result.report.std_noop);
  CHECK(result.report.repeat_count == 0);
  CHECK(result.report.r_count == 0);
}

TEST_CASE("identical runs serialize identically") {
  PipelineConfig cfg = small_config("pipe_out/determinism");
  cfg.exports.report = true;
  const RunResult a = run_pipeline(cfg);
  const RunResult b = run_pipeline(cfg);
  CHECK(strip_timings(report_to_json(a.report)) ==
        strip_timings(report_to_json(b.report)));

  // The written file matches the in-memory serialization.
  const std::string on_disk = read_text_file(cfg.out_dir + "/report.json");
  CHECK(on_disk == report_to_json(b.report));

  // A different seed changes the features.
  PipelineConfig reseeded = cfg;
  reseeded.schedule.seed = 1;
  CHECK(run_pipeline(reseeded).report.final_feature_hash !=
        a.report.final_feature_hash);
}

TEST_CASE("post-gate conditioning flag changes late steps only") {
  PipelineConfig merged = small_config("pipe_out/uat");
  PipelineConfig kept = merged;
  kept.union_after_t_a = true;
  const RunResult with_merged = run_pipeline(merged);
  const RunResult with_union = run_pipeline(kept);
  // Identical through the guided phase...
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(with_merged.report.steps[i].feature_hash ==
          with_union.report.steps[i].feature_hash);
  }
  // ...then the conditioning differs.
  CHECK(with_merged.report.steps[8].feature_hash !=
        with_union.report.steps[8].feature_hash);
}

TEST_CASE("single precision runs are reported as such") {
  PipelineConfig cfg = small_config("pipe_out/f32");
  cfg.precision = Precision::kFloat32;
  cfg.schedule.total_steps = 3;
  cfg.schedule.t_a = 2;
  cfg.schedule.t_b = 1;
  const RunResult result = run_pipeline(cfg);
  CHECK(result.report.precision == "float32");
  CHECK(result.features.tokens.all_finite());

  PipelineConfig f64 = small_config("pipe_out/f32");
  f64.schedule.total_steps = 3;
  f64.schedule.t_a = 2;
  f64.schedule.t_b = 1;
  CHECK(run_pipeline(f64).report.final_feature_hash !=
        result.report.final_feature_hash);
}

TEST_CASE("exports land under the output directory") {
  PipelineConfig cfg = small_config("pipe_out/exports");
  cfg.schedule.total_steps = 2;
  cfg.schedule.t_a = 2;
  cfg.schedule.t_b = 1;
  cfg.exports.report = true;
  cfg.exports.masks = true;
  cfg.exports.rope = true;
  cfg.exports.attention_maps = true;
  cfg.exports.csv = true;
  cfg.exports.pgm = true;
  cfg.exports.json = true;
  const RunResult result = run_pipeline(cfg);

  const std::vector<std::string> want = {
      "self_mask.csv",       "self_mask.pgm",       "self_mask.json",
      "cross_mask.csv",      "cross_mask.pgm",      "cross_mask.json",
      "rope_base.csv",       "rope_base.json",      "rope_std.csv",
      "rope_std.json",       "attention_before.csv", "attention_before.pgm",
      "attention_before.json", "attention_after.csv", "attention_after.pgm",
      "attention_after.json", "report.json"};
  CHECK(result.report.exports == want);
  for (const std::string& name : want) {
    CHECK(fs::exists(fs::path(cfg.out_dir) / name));
  }
}

TEST_CASE("missing trajectory files surface as io errors") {
  PipelineConfig cfg = small_config("pipe_out/missing");
  cfg.trajectory_path = "pipe_out/missing/nope.json";
  CHECK(thrown_code([&] { run_pipeline(cfg); }) == ErrorCode::IoError);
  CHECK(thrown_message([&] { run_pipeline(cfg); }).find("nope.json") !=
        std::string::npos);
}

TEST_CASE("trajectories that leave the grid are rejected up front") {
  const std::string dir = "pipe_out/oob";
  PipelineConfig cfg = small_config(dir);
  write_text_file(dir + "/oob.json", R"({
    "frames": 2,
    "mode": "perframe",
    "boxes": [[0, 0, 0, 2, 2], [1, 3, 3, 5, 5]]
  })");
  cfg.trajectory_path = dir + "/oob.json";
  CHECK(thrown_code([&] { run_pipeline(cfg); }) == ErrorCode::OutOfBounds);
  CHECK(thrown_message([&] { run_pipeline(cfg); }).find("frame 1") !=
        std::string::npos);
}

TEST_CASE("combine rule") {
  FeatureSequence cond;
  cond.tokens = Mat(2, 2);
  cond.tokens.data = {1.0, 2.0, 3.0, 4.0};
  cond.heads = 1;
  FeatureSequence uncond;
  uncond.tokens = Mat(2, 2);
  uncond.tokens.data = {0.0, 1.0, 1.0, 2.0};
  uncond.heads = 1;

  CHECK(cfg_combine(cond, uncond, 0.0).tokens.data == uncond.tokens.data);
  CHECK(cfg_combine(cond, uncond, 1.0).tokens.data == cond.tokens.data);
  CHECK(cfg_combine(cond, cond, 5.0).tokens.data == cond.tokens.data);
  CHECK(cfg_combine(cond, uncond, 5.0).tokens.data ==
        std::vector<double>{5.0, 6.0, 11.0, 12.0});

  FeatureSequence wrong;
  wrong.tokens = Mat(1, 2);
  wrong.heads = 1;
  CHECK(thrown_code([&] { cfg_combine(cond, wrong, 1.0); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("attention analysis produces frame-pair maps") {
  PipelineConfig cfg = small_config("pipe_out/analysis");
  const AttentionAnalysis analysis = analyze_attention(cfg, 0, 1);
  CHECK(analysis.frame_a == 0);
  CHECK(analysis.frame_b == 1);
  CHECK(analysis.map_before.rows == 16);
  CHECK(analysis.map_before.cols == 16);
  CHECK(analysis.map_after.rows == 16);
  REQUIRE(analysis.score_before.has_value());
  REQUIRE(analysis.score_after.has_value());
  CHECK(*analysis.score_before > 0.0);
  CHECK(*analysis.score_after > 0.0);

  CHECK(thrown_code([&] { analyze_attention(cfg, 0, 2); }) ==
        ErrorCode::OutOfBounds);
}

TEST_CASE("remote client configuration is validated before any network use") {
  PipelineConfig cfg = small_config("pipe_out/remote");
  cfg.client = "remote";
  CHECK(thrown_code([&] { cfg.validate(); }) == ErrorCode::ConfigError);
  cfg.remote.endpoint = "http://127.0.0.1:9/v1/complete";
  CHECK_NOTHROW(cfg.validate());
}

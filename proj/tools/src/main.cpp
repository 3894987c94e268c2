#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <nlohmann/json.hpp>

#include "trajctl/attention.hpp"
#include "trajctl/errors.hpp"
#include "trajctl/export_io.hpp"
#include "trajctl/guidance.hpp"
#include "trajctl/lattice.hpp"
#include "trajctl/masking.hpp"
#include "trajctl/pipeline.hpp"
#include "trajctl/rope.hpp"
#include "trajctl/trajectory.hpp"

namespace {

using namespace trajctl;

// Config-class problems (bad input documents, invalid flags) exit 2;
// everything else that throws is a runtime failure and exits 3.
int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::MalformedDocument:
    case ErrorCode::IoError:
    case ErrorCode::EmptyBox:
    case ErrorCode::OutOfBounds:
    case ErrorCode::FrameCountMismatch:
    case ErrorCode::NonDivisible:
    case ErrorCode::EmptyPrompt:
      return 2;
    default:
      return 3;
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> t_a;
  std::optional<std::size_t> t_b;
  std::optional<std::string> anchor;
  bool three_d_aware = false;
  std::vector<std::string> formats;
  std::optional<std::string> out;
};

void add_override_flags(CLI::App* cmd, Overrides& ov, bool schedule_flags) {
  if (schedule_flags) {
    cmd->add_option("--steps", ov.steps, "Total denoising steps");
    cmd->add_option("--t-a", ov.t_a,
                    "Steps with separation guidance active");
    cmd->add_option("--t-b", ov.t_b,
                    "Steps with the coordinate transform active");
  }
  cmd->add_option("--seed", ov.seed, "Run seed");
  cmd->add_option("--anchor", ov.anchor, "Anchor frame selection")
      ->check(CLI::IsMember({"random", "min-box", "min_box"}));
  cmd->add_flag("--3d-aware", ov.three_d_aware,
                "Anchor at the minimum-area box and resample its coordinates "
                "to each frame's box size");
  cmd->add_option("--format", ov.formats, "Artifact formats")
      ->check(CLI::IsMember({"csv", "pgm", "json"}));
  cmd->add_option("--out", ov.out, "Output directory");
}

void apply_overrides(PipelineConfig& cfg, const Overrides& ov) {
  if (ov.seed) cfg.schedule.seed = *ov.seed;
  if (ov.steps) cfg.schedule.total_steps = *ov.steps;
  if (ov.t_a) cfg.schedule.t_a = *ov.t_a;
  if (ov.t_b) cfg.schedule.t_b = *ov.t_b;
  if (ov.anchor)
    cfg.schedule.anchor_mode = (*ov.anchor == "random")
                                   ? AnchorMode::kRandom
                                   : AnchorMode::kMinBox;
  if (ov.three_d_aware) cfg.schedule.three_d_aware = true;
  if (!ov.formats.empty()) {
    cfg.exports.csv = false;
    cfg.exports.pgm = false;
    cfg.exports.json = false;
    for (const std::string& f : ov.formats) {
      if (f == "csv") cfg.exports.csv = true;
      if (f == "pgm") cfg.exports.pgm = true;
      if (f == "json") cfg.exports.json = true;
    }
  }
  if (ov.out) cfg.out_dir = *ov.out;
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  PipelineConfig cfg = load_config(config_path);
  apply_overrides(cfg, ov);
  const RunResult res = run_pipeline(cfg);
  std::cout << "run complete: " << res.report.steps.size()
            << " steps, anchor frame " << res.report.anchor_frame
            << ", final feature hash " << hex64(res.report.final_feature_hash)
            << "\n";
  for (const std::string& name : res.report.exports)
    std::cout << (std::filesystem::path(cfg.out_dir) / name).string() << "\n";
  return 0;
}

// Runs the artifact plumbing of the pipeline with zero denoising steps so
// export subcommands share one code path with `run`.
int export_artifacts(const std::string& config_path, const Overrides& ov,
                     bool masks, bool rope) {
  PipelineConfig cfg = load_config(config_path);
  apply_overrides(cfg, ov);
  cfg.schedule.total_steps = 0;
  cfg.schedule.t_a = 0;
  cfg.schedule.t_b = 0;
  cfg.exports.report = false;
  cfg.exports.masks = masks;
  cfg.exports.rope = rope;
  cfg.exports.attention_maps = false;
  const RunResult res = run_pipeline(cfg);
  for (const std::string& name : res.report.exports)
    std::cout << (std::filesystem::path(cfg.out_dir) / name).string() << "\n";
  return 0;
}

int cmd_validate_trajectory(const std::string& path, std::size_t frames,
                            std::size_t rows, std::size_t cols,
                            std::uint64_t seed) {
  const Trajectory traj = load_trajectory(path);
  const TokenLattice lattice{frames, rows, cols};

  for (std::size_t t = 0; t < traj.frames(); ++t) {
    const BoundingBox& b = traj.boxes[t];
    std::string status = "ok";
    if (b.x1 <= b.x0 || b.y1 <= b.y0)
      status = "empty box";
    else if (b.x0 < 0 || b.y0 < 0 || b.x1 > static_cast<int>(cols) ||
             b.y1 > static_cast<int>(rows))
      status = "out of bounds";
    std::cout << "frame " << t << ": box [" << b.x0 << "," << b.y0 << ","
              << b.x1 << "," << b.y1 << ") " << b.width() << "x" << b.height()
              << " area " << b.area() << " " << status << "\n";
  }
  traj.validate(lattice);  // throws (naming the frame) if anything was bad

  std::cout << "min-box frame: " << min_box_frame(traj) << "\n";
  const TokenSet fg = foreground_token_set(traj, lattice);
  std::cout << "|S_fg| = " << fg.size() << "\n";

  const RopeTable base = build_3d_rope(lattice, RopeLayout{});
  for (const AnchorMode mode : {AnchorMode::kRandom, AnchorMode::kMinBox}) {
    const std::size_t anchor = select_anchor(traj, mode, seed);
    const RopeTable transformed =
        std_rope(base, traj, anchor, {.allow_resample = true});
    const RepeatSets repeats = repeat_token_sets(transformed, lattice);
    const TokenSet r = r_token_set(repeats.all, fg);
    std::cout << "anchor "
              << (mode == AnchorMode::kRandom ? "random" : "min-box")
              << " (frame " << anchor << "): |S_repeat| = "
              << repeats.all.size() << ", |S_R| = " << r.size();
    if (r.empty()) std::cout << " (STD-RoPE is a no-op)";
    std::cout << "\n";
  }
  return 0;
}

int cmd_analyze_attention(const std::string& config_path,
                          std::optional<std::size_t> frame_a,
                          std::optional<std::size_t> frame_b,
                          const Overrides& ov) {
  PipelineConfig cfg = load_config(config_path);
  apply_overrides(cfg, ov);
  const TokenLattice lattice = patchify(cfg.latent);
  const std::size_t fa = frame_a.value_or(0);
  const std::size_t fb = frame_b.value_or(lattice.frames - 1);

  const AttentionAnalysis a = analyze_attention(cfg, fa, fb);

  auto emit = [&](const std::string& name, const std::string& content) {
    const std::string path =
        (std::filesystem::path(cfg.out_dir) / name).string();
    write_text_file(path, content);
    std::cout << path << "\n";
  };
  if (cfg.exports.csv) emit("attention_before.csv", matrix_to_csv(a.map_before));
  if (cfg.exports.pgm) emit("attention_before.pgm", matrix_to_pgm(a.map_before));
  if (cfg.exports.json)
    emit("attention_before.json", matrix_to_json(a.map_before));
  if (cfg.exports.csv) emit("attention_after.csv", matrix_to_csv(a.map_after));
  if (cfg.exports.pgm) emit("attention_after.pgm", matrix_to_pgm(a.map_after));
  if (cfg.exports.json)
    emit("attention_after.json", matrix_to_json(a.map_after));

  nlohmann::ordered_json uplift;
  uplift["frame_a"] = a.frame_a;
  uplift["frame_b"] = a.frame_b;
  if (a.score_before)
    uplift["score_before"] = *a.score_before;
  else
    uplift["score_before"] = nullptr;
  if (a.score_after)
    uplift["score_after"] = *a.score_after;
  else
    uplift["score_after"] = nullptr;
  if (a.score_before && a.score_after)
    uplift["uplift"] = *a.score_after - *a.score_before;
  else
    uplift["uplift"] = nullptr;
  emit("uplift.json", uplift.dump(2) + "\n");

  if (a.score_before && a.score_after)
    std::cout << "cross-frame foreground score: before " << *a.score_before
              << ", after " << *a.score_after << "\n";
  else
    std::cout << "cross-frame foreground score: n/a (single frame)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trajectory control for 3D full-attention video denoisers"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Execute the denoising pipeline");
  std::string run_config;
  Overrides run_ov;
  run->add_option("--config", run_config, "Pipeline config JSON")->required();
  add_override_flags(run, run_ov, true);

  // validate-trajectory
  auto* validate = app.add_subcommand(
      "validate-trajectory", "Check a trajectory against a token grid");
  std::string traj_path;
  std::size_t v_frames = 0;
  std::size_t v_rows = 0;
  std::size_t v_cols = 0;
  std::uint64_t v_seed = 0;
  validate->add_option("path", traj_path, "Trajectory JSON")->required();
  validate->add_option("--frames", v_frames, "Token-grid frames")->required();
  validate->add_option("--rows", v_rows, "Token-grid rows")->required();
  validate->add_option("--cols", v_cols, "Token-grid columns")->required();
  validate->add_option("--seed", v_seed, "Seed for the random anchor");

  // export-masks
  auto* masks = app.add_subcommand(
      "export-masks", "Write the self- and cross-attention masks");
  std::string masks_config;
  Overrides masks_ov;
  masks->add_option("--config", masks_config, "Pipeline config JSON")
      ->required();
  add_override_flags(masks, masks_ov, false);

  // export-rope
  auto* rope = app.add_subcommand(
      "export-rope", "Write original and transformed rotary coordinates");
  std::string rope_config;
  Overrides rope_ov;
  rope->add_option("--config", rope_config, "Pipeline config JSON")
      ->required();
  add_override_flags(rope, rope_ov, false);

  // analyze-attention
  auto* analyze = app.add_subcommand(
      "analyze-attention",
      "Frame-pair attention maps with and without the coordinate transform");
  std::string analyze_config;
  std::optional<std::size_t> frame_a, frame_b;
  Overrides analyze_ov;
  analyze->add_option("--config", analyze_config, "Pipeline config JSON")
      ->required();
  analyze->add_option("--frame-a", frame_a, "Query frame (default 0)");
  analyze->add_option("--frame-b", frame_b, "Key frame (default last)");
  add_override_flags(analyze, analyze_ov, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "trajctl: error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_config, run_ov);
    if (validate->parsed())
      return cmd_validate_trajectory(traj_path, v_frames, v_rows, v_cols,
                                     v_seed);
    if (masks->parsed())
      return export_artifacts(masks_config, masks_ov, true, false);
    if (rope->parsed())
      return export_artifacts(rope_config, rope_ov, false, true);
    if (analyze->parsed())
      return cmd_analyze_attention(analyze_config, frame_a, frame_b,
                                   analyze_ov);
  } catch (const Error& e) {
    std::cerr << "trajctl: error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "trajctl: error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trajctl/attention.hpp"
#include "trajctl/guidance.hpp"
#include "trajctl/lattice.hpp"
#include "trajctl/masking.hpp"
#include "trajctl/rope.hpp"
#include "trajctl/trajectory.hpp"

namespace trajctl {

// Knobs of the seeded toy block. embed_dim comes from LatentShape.
struct ModelConfig {
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  double qk_alignment = 0.7;
  double feature_correlation = 0.5;
};

struct ScheduleConfig {
  std::size_t total_steps = 50;
  std::size_t t_a = 30;  // separation guidance active on steps [0, t_a)
  std::size_t t_b = 5;   // coordinate transform + R-token mask on [0, t_b)
  double cfg_scale = 5.0;
  std::uint64_t seed = 0;
  AnchorMode anchor_mode = AnchorMode::kRandom;
  bool three_d_aware = false;

  // t_a and t_b gate independently (t_b <= t_a is NOT required); each must
  // be <= total_steps and cfg_scale must be >= 0.
  void validate() const;
};

enum class Precision { kFloat64, kFloat32 };

struct ExportConfig {
  bool report = true;
  bool masks = false;
  bool rope = false;
  bool attention_maps = false;
  // Formats applied to the artifacts above (the run report is always JSON).
  bool csv = true;
  bool pgm = false;
  bool json = false;
};

struct PipelineConfig {
  LatentShape latent;
  RopeLayout rope;
  ModelConfig model;
  ScheduleConfig schedule;
  std::string trajectory_path;
  std::string prompt;
  std::string client = "stub";  // "stub" | "remote"
  RemoteSplitterConfig remote;
  // After step t_a, condition on the union embedding without a mask instead
  // of the merged original-prompt embedding.
  bool union_after_t_a = false;
  Precision precision = Precision::kFloat64;
  ExportConfig exports;
  std::string out_dir = "out";

  void validate() const;  // throws ConfigError
};

// Strict parse: unknown fields anywhere in the document are rejected.
// Relative trajectory paths resolve against base_dir.
PipelineConfig parse_config(const std::string& json_text,
                            const std::string& base_dir = "");
PipelineConfig load_config(const std::string& path);

struct StepRecord {
  std::size_t step = 0;
  bool std_active = false;
  bool sg_active = false;
  std::optional<double> fg_score;  // empty on single-frame lattices
  std::uint64_t feature_hash = 0;
};

struct RunReport {
  int schema_version = 1;
  std::uint64_t seed = 0;
  TokenLattice lattice;
  ScheduleConfig schedule;
  std::size_t anchor_frame = 0;
  std::string precision = "float64";
  PromptBundle prompts;
  std::size_t fg_count = 0;
  std::size_t repeat_count = 0;
  std::size_t r_count = 0;
  std::vector<std::size_t> repeat_per_frame;
  bool std_noop = false;  // transform left every coordinate unchanged
  std::vector<StepRecord> steps;
  std::uint64_t final_feature_hash = 0;
  std::vector<std::string> exports;  // filenames written under out_dir
  double wall_ms = 0.0;
};

// Deterministic serialization. All timing data lives under the single
// "timings" key so consumers can drop it when comparing runs byte for byte.
std::string report_to_json(const RunReport& report);

struct RunResult {
  RunReport report;
  FeatureSequence features;
};

// Executes the full schedule and writes the artifacts selected in
// config.exports under config.out_dir. Errors raised inside the loop carry
// "step N:" context.
RunResult run_pipeline(const PipelineConfig& config);

// The same update loop with the control stack absent: original coordinates,
// no masks, merged prompt at every step. A run with t_a = t_b = 0 matches
// this bit for bit; used to pin the gate semantics.
RunResult run_baseline(const PipelineConfig& config);

// uncond + scale * (cond - uncond), elementwise. Throws ShapeMismatch.
FeatureSequence cfg_combine(const FeatureSequence& cond_out,
                            const FeatureSequence& uncond_out, double scale);

// Frame-pair attention maps on the initial features, with the original and
// the trajectory-aligned coordinate tables, plus the cross-frame
// foreground-attention score under each.
struct AttentionAnalysis {
  std::size_t frame_a = 0;
  std::size_t frame_b = 0;
  Mat map_before;
  Mat map_after;
  std::optional<double> score_before;
  std::optional<double> score_after;
};

AttentionAnalysis analyze_attention(const PipelineConfig& config,
                                    std::size_t frame_a, std::size_t frame_b);

}  // namespace trajctl

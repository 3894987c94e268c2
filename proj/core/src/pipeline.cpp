#include "trajctl/pipeline.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <initializer_list>
#include <memory>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

#include "trajctl/det_rng.hpp"
#include "trajctl/errors.hpp"
#include "trajctl/export_io.hpp"

namespace trajctl {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Fixed surrogate denoiser step size; the mechanisms under test live in what
// the attention sees per step, not in the scheduler.
constexpr double kUpdateRate = 0.1;
constexpr std::size_t kMaxPromptTokens = 64;

std::uint64_t tagged_seed(std::string_view tag, std::uint64_t seed) {
  return fnv1a64(tag) ^ seed;
}

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t feature_hash(const FeatureSequence& x) {
  return fnv1a64(x.tokens.data.data(),
                 x.tokens.data.size() * sizeof(double));
}

bool is_blank(const std::string& s) {
  for (unsigned char c : s)
    if (!std::isspace(c)) return false;
  return true;
}

// ---- strict config parsing ------------------------------------------------

[[noreturn]] void config_error(const std::string& msg) {
  throw Error(ErrorCode::ConfigError, msg);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known)
      config_error("unknown field '" + it.key() + "' in " + where);
  }
}

const json& require_object(const json& doc, const std::string& where,
                           const char* key) {
  if (!doc.contains(key))
    config_error(where + " is missing required field '" + std::string(key) +
                 "'");
  const json& v = doc.at(key);
  if (!v.is_object())
    config_error("field '" + std::string(key) + "' in " + where +
                 " must be an object");
  return v;
}

std::size_t get_count(const json& obj, const std::string& where,
                      const char* key, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    config_error("field '" + std::string(key) + "' in " + where +
                 " must be an integer");
  if (v.is_number_integer() && v.get<std::int64_t>() < 0)
    config_error("field '" + std::string(key) + "' in " + where +
                 " must be non-negative");
  return v.get<std::size_t>();
}

std::uint64_t get_seed(const json& obj, const std::string& where,
                       const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() &&
      !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    config_error("field '" + std::string(key) + "' in " + where +
                 " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

double get_real(const json& obj, const std::string& where, const char* key,
                double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number())
    config_error("field '" + std::string(key) + "' in " + where +
                 " must be a number");
  return v.get<double>();
}

bool get_bool(const json& obj, const std::string& where, const char* key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean())
    config_error("field '" + std::string(key) + "' in " + where +
                 " must be a boolean");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& where,
                       const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string())
    config_error("field '" + std::string(key) + "' in " + where +
                 " must be a string");
  return v.get<std::string>();
}

AnchorMode parse_anchor_mode(const std::string& text) {
  if (text == "random") return AnchorMode::kRandom;
  if (text == "min_box" || text == "min-box") return AnchorMode::kMinBox;
  config_error("anchor mode must be 'random' or 'min-box', got '" + text +
               "'");
}

const char* anchor_mode_name(AnchorMode mode) {
  return mode == AnchorMode::kMinBox ? "min_box" : "random";
}

// ---- shared loop machinery -------------------------------------------------

struct LoopContext {
  const PipelineConfig* config = nullptr;
  const BlockWeights* weights = nullptr;
  const RopeTable* base_table = nullptr;
  const RopeTable* std_table = nullptr;          // null in the baseline
  const AttentionMask* self_mask = nullptr;      // null in the baseline
  const ConditionEmbedding* union_cond = nullptr;  // null in the baseline
  const AttentionMask* cross_mask = nullptr;     // null in the baseline
  const ConditionEmbedding* merged_cond = nullptr;
  const Trajectory* traj = nullptr;              // null in the baseline
  const TokenLattice* lattice = nullptr;
};

void run_loop(const LoopContext& ctx, FeatureSequence& x,
              std::vector<StepRecord>& records) {
  const ScheduleConfig& sched = ctx.config->schedule;
  const bool f32 = ctx.config->precision == Precision::kFloat32;
  Mat capture;
  for (std::size_t step = 0; step < sched.total_steps; ++step) {
    StepRecord rec;
    rec.step = step;
    rec.std_active = step < sched.t_b && ctx.std_table != nullptr;
    rec.sg_active = step < sched.t_a && ctx.union_cond != nullptr;
    try {
      DitBlockInputs cond_in;
      cond_in.table = rec.std_active ? ctx.std_table : ctx.base_table;
      cond_in.self_mask = rec.std_active ? ctx.self_mask : nullptr;
      if (rec.sg_active) {
        cond_in.cond = ctx.union_cond;
        cond_in.cross_mask = ctx.cross_mask;
      } else {
        cond_in.cond = (ctx.config->union_after_t_a && ctx.union_cond)
                           ? ctx.union_cond
                           : ctx.merged_cond;
        cond_in.cross_mask = nullptr;
      }

      DitBlockInputs uncond_in;
      uncond_in.table = cond_in.table;
      uncond_in.self_mask = cond_in.self_mask;

      AttentionOptions cond_options;
      if (ctx.traj) cond_options.capture_weights = &capture;

      const FeatureSequence cond_out =
          f32 ? dit_block_f32(x, cond_in, *ctx.weights, cond_options)
              : dit_block(x, cond_in, *ctx.weights, cond_options);
      const FeatureSequence uncond_out =
          f32 ? dit_block_f32(x, uncond_in, *ctx.weights, {})
              : dit_block(x, uncond_in, *ctx.weights, {});
      const FeatureSequence update =
          cfg_combine(cond_out, uncond_out, sched.cfg_scale);
      for (std::size_t i = 0; i < x.tokens.data.size(); ++i)
        x.tokens.data[i] += kUpdateRate * update.tokens.data[i];

      if (ctx.traj)
        rec.fg_score = inter_frame_fg_score(capture, *ctx.traj, *ctx.lattice);
      rec.feature_hash = feature_hash(x);
    } catch (const Error& e) {
      throw Error(e.code(),
                  "step " + std::to_string(step) + ": " + e.what());
    }
    records.push_back(std::move(rec));
  }
}

std::unique_ptr<SplitterClient> make_client(const PipelineConfig& config) {
  if (config.client == "remote")
    return std::make_unique<RemoteSplitter>(config.remote);
  return std::make_unique<StubSplitter>();
}

ConditionEmbedding merged_condition(const TextEncoder& encoder,
                                    const std::string& prompt) {
  ConditionEmbedding merged;
  merged.keys = encoder.encode(prompt);
  merged.layout.fg_span = {0, merged.keys.rows};
  merged.layout.bg_span = {merged.keys.rows, merged.keys.rows};
  return merged;
}

}  // namespace

void ScheduleConfig::validate() const {
  if (t_a > total_steps)
    config_error("t_a (" + std::to_string(t_a) + ") exceeds total_steps (" +
                 std::to_string(total_steps) + ")");
  if (t_b > total_steps)
    config_error("t_b (" + std::to_string(t_b) + ") exceeds total_steps (" +
                 std::to_string(total_steps) + ")");
  if (!(cfg_scale >= 0.0)) config_error("cfg_scale must be >= 0");
}

void PipelineConfig::validate() const {
  try {
    latent.validate();
    rope.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  if (model.heads == 0 || latent.embed_dim % model.heads != 0)
    config_error("embed_dim " + std::to_string(latent.embed_dim) +
                 " is not divisible into " + std::to_string(model.heads) +
                 " heads");
  if (latent.embed_dim / model.heads != rope.head_dim)
    config_error("rope head_dim " + std::to_string(rope.head_dim) +
                 " does not match embed_dim/heads = " +
                 std::to_string(latent.embed_dim / model.heads));
  if (model.ff_mult == 0) config_error("ff_mult must be positive");
  if (model.qk_alignment < 0.0 || model.qk_alignment > 1.0)
    config_error("qk_alignment must lie in [0, 1]");
  if (model.feature_correlation < 0.0 || model.feature_correlation > 1.0)
    config_error("feature_correlation must lie in [0, 1]");
  schedule.validate();
  if (trajectory_path.empty()) config_error("trajectory path is empty");
  if (is_blank(prompt)) config_error("prompt is empty");
  if (client != "stub" && client != "remote")
    config_error("client must be 'stub' or 'remote', got '" + client + "'");
  if (client == "remote" && remote.endpoint.empty())
    config_error("remote client requires an endpoint");
}

PipelineConfig parse_config(const std::string& json_text,
                            const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) config_error("config root must be an object");
  check_keys(doc, "config",
             {"schema_version", "latent", "rope", "model", "schedule",
              "trajectory", "prompt", "client", "remote", "union_after_t_a",
              "precision", "exports", "out_dir"});
  if (get_count(doc, "config", "schema_version", 1) != 1)
    config_error("unsupported config schema_version");

  PipelineConfig cfg;

  const json& lat = require_object(doc, "config", "latent");
  check_keys(lat, "latent",
             {"frames", "channels", "height", "width", "patch",
              "pixel_frames", "pixel_height", "pixel_width", "embed_dim"});
  cfg.latent.frames = get_count(lat, "latent", "frames", cfg.latent.frames);
  cfg.latent.channels =
      get_count(lat, "latent", "channels", cfg.latent.channels);
  cfg.latent.height = get_count(lat, "latent", "height", cfg.latent.height);
  cfg.latent.width = get_count(lat, "latent", "width", cfg.latent.width);
  cfg.latent.patch = get_count(lat, "latent", "patch", cfg.latent.patch);
  cfg.latent.pixel_frames =
      get_count(lat, "latent", "pixel_frames", cfg.latent.frames);
  cfg.latent.pixel_height =
      get_count(lat, "latent", "pixel_height", cfg.latent.height);
  cfg.latent.pixel_width =
      get_count(lat, "latent", "pixel_width", cfg.latent.width);
  cfg.latent.embed_dim =
      get_count(lat, "latent", "embed_dim", cfg.latent.embed_dim);

  if (doc.contains("model")) {
    const json& model = require_object(doc, "config", "model");
    check_keys(model, "model",
               {"heads", "ff_mult", "qk_alignment", "feature_correlation"});
    cfg.model.heads = get_count(model, "model", "heads", cfg.model.heads);
    cfg.model.ff_mult =
        get_count(model, "model", "ff_mult", cfg.model.ff_mult);
    cfg.model.qk_alignment =
        get_real(model, "model", "qk_alignment", cfg.model.qk_alignment);
    cfg.model.feature_correlation = get_real(
        model, "model", "feature_correlation", cfg.model.feature_correlation);
  }

  if (doc.contains("rope")) {
    const json& rope = require_object(doc, "config", "rope");
    check_keys(rope, "rope",
               {"head_dim", "channels_t", "channels_y", "channels_x",
                "theta_base"});
    cfg.rope.head_dim = get_count(rope, "rope", "head_dim", cfg.rope.head_dim);
    cfg.rope.channels_t =
        get_count(rope, "rope", "channels_t", cfg.rope.channels_t);
    cfg.rope.channels_y =
        get_count(rope, "rope", "channels_y", cfg.rope.channels_y);
    cfg.rope.channels_x =
        get_count(rope, "rope", "channels_x", cfg.rope.channels_x);
    cfg.rope.theta_base =
        get_real(rope, "rope", "theta_base", cfg.rope.theta_base);
  } else if (cfg.model.heads > 0 &&
             cfg.latent.embed_dim % cfg.model.heads == 0) {
    cfg.rope = RopeLayout::default_split(cfg.latent.embed_dim /
                                         cfg.model.heads);
  }

  if (doc.contains("schedule")) {
    const json& sched = require_object(doc, "config", "schedule");
    check_keys(sched, "schedule",
               {"steps", "t_a", "t_b", "cfg_scale", "seed", "anchor",
                "three_d_aware"});
    cfg.schedule.total_steps =
        get_count(sched, "schedule", "steps", cfg.schedule.total_steps);
    cfg.schedule.t_a = get_count(sched, "schedule", "t_a", cfg.schedule.t_a);
    cfg.schedule.t_b = get_count(sched, "schedule", "t_b", cfg.schedule.t_b);
    cfg.schedule.cfg_scale =
        get_real(sched, "schedule", "cfg_scale", cfg.schedule.cfg_scale);
    cfg.schedule.seed = get_seed(sched, "schedule", "seed", cfg.schedule.seed);
    cfg.schedule.anchor_mode = parse_anchor_mode(
        get_string(sched, "schedule", "anchor", "random"));
    cfg.schedule.three_d_aware = get_bool(sched, "schedule", "three_d_aware",
                                          cfg.schedule.three_d_aware);
  }

  if (!doc.contains("trajectory"))
    config_error("config is missing required field 'trajectory'");
  cfg.trajectory_path = get_string(doc, "config", "trajectory", "");
  if (!base_dir.empty()) {
    const std::filesystem::path p(cfg.trajectory_path);
    if (p.is_relative())
      cfg.trajectory_path = (std::filesystem::path(base_dir) / p).string();
  }

  if (!doc.contains("prompt"))
    config_error("config is missing required field 'prompt'");
  cfg.prompt = get_string(doc, "config", "prompt", "");

  cfg.client = get_string(doc, "config", "client", cfg.client);
  if (doc.contains("remote")) {
    const json& remote = require_object(doc, "config", "remote");
    check_keys(remote, "remote",
               {"endpoint", "model", "timeout_ms", "api_key_env"});
    cfg.remote.endpoint =
        get_string(remote, "remote", "endpoint", cfg.remote.endpoint);
    cfg.remote.model = get_string(remote, "remote", "model", cfg.remote.model);
    cfg.remote.timeout_ms = static_cast<int>(get_count(
        remote, "remote", "timeout_ms",
        static_cast<std::size_t>(cfg.remote.timeout_ms)));
    cfg.remote.api_key_env =
        get_string(remote, "remote", "api_key_env", cfg.remote.api_key_env);
  }

  cfg.union_after_t_a =
      get_bool(doc, "config", "union_after_t_a", cfg.union_after_t_a);

  const std::string precision =
      get_string(doc, "config", "precision", "float64");
  if (precision == "float64")
    cfg.precision = Precision::kFloat64;
  else if (precision == "float32")
    cfg.precision = Precision::kFloat32;
  else
    config_error("precision must be 'float64' or 'float32', got '" +
                 precision + "'");

  if (doc.contains("exports")) {
    const json& exp = require_object(doc, "config", "exports");
    check_keys(exp, "exports",
               {"report", "masks", "rope", "attention_maps", "formats"});
    cfg.exports.report = get_bool(exp, "exports", "report", cfg.exports.report);
    cfg.exports.masks = get_bool(exp, "exports", "masks", cfg.exports.masks);
    cfg.exports.rope = get_bool(exp, "exports", "rope", cfg.exports.rope);
    cfg.exports.attention_maps =
        get_bool(exp, "exports", "attention_maps", cfg.exports.attention_maps);
    if (exp.contains("formats")) {
      const json& formats = exp.at("formats");
      if (!formats.is_array())
        config_error("field 'formats' in exports must be an array");
      cfg.exports.csv = false;
      cfg.exports.pgm = false;
      cfg.exports.json = false;
      for (const json& f : formats) {
        if (!f.is_string())
          config_error("entries of exports.formats must be strings");
        const std::string name = f.get<std::string>();
        if (name == "csv")
          cfg.exports.csv = true;
        else if (name == "pgm")
          cfg.exports.pgm = true;
        else if (name == "json")
          cfg.exports.json = true;
        else
          config_error("unknown export format '" + name + "'");
      }
    }
  }

  cfg.out_dir = get_string(doc, "config", "out_dir", cfg.out_dir);
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  const std::string text = read_text_file(path);
  const std::filesystem::path parent =
      std::filesystem::path(path).parent_path();
  return parse_config(text, parent.string());
}

std::string report_to_json(const RunReport& r) {
  ordered_json j;
  j["schema_version"] = r.schema_version;
  j["seed"] = r.seed;
  j["lattice"] = ordered_json{{"frames", r.lattice.frames},
                              {"rows", r.lattice.rows},
                              {"cols", r.lattice.cols},
                              {"tokens", r.lattice.size()}};
  j["schedule"] =
      ordered_json{{"total_steps", r.schedule.total_steps},
                   {"t_a", r.schedule.t_a},
                   {"t_b", r.schedule.t_b},
                   {"cfg_scale", r.schedule.cfg_scale},
                   {"anchor_mode", anchor_mode_name(r.schedule.anchor_mode)},
                   {"three_d_aware", r.schedule.three_d_aware}};
  j["anchor_frame"] = r.anchor_frame;
  j["precision"] = r.precision;
  j["prompts"] = ordered_json{{"original", r.prompts.original},
                              {"foreground", r.prompts.foreground},
                              {"background", r.prompts.background},
                              {"warnings", r.prompts.warnings}};
  j["sets"] = ordered_json{{"fg", r.fg_count},
                           {"repeat", r.repeat_count},
                           {"r", r.r_count},
                           {"repeat_per_frame", r.repeat_per_frame}};
  j["std_noop"] = r.std_noop;
  ordered_json steps = ordered_json::array();
  for (const StepRecord& s : r.steps) {
    ordered_json e;
    e["step"] = s.step;
    e["std_active"] = s.std_active;
    e["sg_active"] = s.sg_active;
    if (s.fg_score)
      e["fg_score"] = *s.fg_score;
    else
      e["fg_score"] = nullptr;
    e["feature_hash"] = to_hex(s.feature_hash);
    steps.push_back(std::move(e));
  }
  j["steps"] = std::move(steps);
  j["final_feature_hash"] = to_hex(r.final_feature_hash);
  j["exports"] = r.exports;
  j["timings"] = ordered_json{{"wall_ms", r.wall_ms}};
  return j.dump(2) + "\n";
}

FeatureSequence cfg_combine(const FeatureSequence& cond_out,
                            const FeatureSequence& uncond_out, double scale) {
  if (cond_out.tokens.rows != uncond_out.tokens.rows ||
      cond_out.tokens.cols != uncond_out.tokens.cols ||
      cond_out.heads != uncond_out.heads)
    throw Error(ErrorCode::ShapeMismatch,
                "conditional and unconditional outputs have different shapes");
  FeatureSequence out = uncond_out;
  for (std::size_t i = 0; i < out.tokens.data.size(); ++i)
    out.tokens.data[i] +=
        scale * (cond_out.tokens.data[i] - uncond_out.tokens.data[i]);
  return out;
}

RunResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = config.schedule.seed;

  const TokenLattice lattice = patchify(config.latent);
  const Trajectory traj = load_trajectory(config.trajectory_path);
  traj.validate(lattice);

  const std::unique_ptr<SplitterClient> client = make_client(config);
  const PromptBundle prompts = split_prompt(config.prompt, *client);

  const TextEncoder encoder{config.latent.embed_dim, seed, kMaxPromptTokens};
  const ConditionEmbedding union_cond = union_condition(
      encoder.encode(prompts.foreground), encoder.encode(prompts.background));
  const ConditionEmbedding merged_cond =
      merged_condition(encoder, config.prompt);

  const RopeTable base_table = build_3d_rope(lattice, config.rope);
  // 3D-aware mode anchors at the minimum-area box and resamples anchor
  // coordinates to each frame's box shape; otherwise box shapes must match
  // the anchor exactly.
  const AnchorMode anchor_mode = config.schedule.three_d_aware
                                     ? AnchorMode::kMinBox
                                     : config.schedule.anchor_mode;
  const std::size_t anchor =
      select_anchor(traj, anchor_mode, tagged_seed("anchor", seed));
  const RopeTable std_table =
      std_rope(base_table, traj, anchor,
               {.allow_resample = config.schedule.three_d_aware});
  const bool std_noop = std_table.coord_y == base_table.coord_y &&
                        std_table.coord_x == base_table.coord_x;

  const TokenSet fg = foreground_token_set(traj, lattice);
  const RepeatSets repeats = repeat_token_sets(std_table, lattice);
  const TokenSet r_tokens = r_token_set(repeats.all, fg);
  const AttentionMask self_mask =
      build_self_mask(fg, r_tokens, lattice.size());
  const AttentionMask cross_mask =
      build_cross_mask(fg, lattice, union_cond.layout);

  const BlockWeights weights = BlockWeights::seeded(
      {config.latent.embed_dim, config.model.heads, config.model.ff_mult,
       config.model.qk_alignment, tagged_seed("weights", seed)});
  FeatureSequence features = make_correlated_features(
      lattice, config.latent.embed_dim, config.model.heads,
      tagged_seed("features", seed), config.model.feature_correlation);

  Mat initial_tokens;
  if (config.exports.attention_maps) initial_tokens = features.tokens;

  RunResult result;
  RunReport& report = result.report;
  report.seed = seed;
  report.lattice = lattice;
  report.schedule = config.schedule;
  report.schedule.anchor_mode = anchor_mode;
  report.anchor_frame = anchor;
  report.precision =
      config.precision == Precision::kFloat32 ? "float32" : "float64";
  report.prompts = prompts;
  report.fg_count = fg.size();
  report.repeat_count = repeats.all.size();
  report.r_count = r_tokens.size();
  for (const TokenSet& s : repeats.per_frame)
    report.repeat_per_frame.push_back(s.size());
  report.std_noop = std_noop;

  LoopContext ctx;
  ctx.config = &config;
  ctx.weights = &weights;
  ctx.base_table = &base_table;
  ctx.std_table = &std_table;
  ctx.self_mask = &self_mask;
  ctx.union_cond = &union_cond;
  ctx.cross_mask = &cross_mask;
  ctx.merged_cond = &merged_cond;
  ctx.traj = &traj;
  ctx.lattice = &lattice;
  run_loop(ctx, features, report.steps);
  report.final_feature_hash = feature_hash(features);

  // Artifact emission. Order is fixed so the exports list (and therefore the
  // report) is deterministic.
  const ExportConfig& exp = config.exports;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file(
        (std::filesystem::path(config.out_dir) / name).string(), content);
    report.exports.push_back(name);
  };
  if (exp.masks) {
    if (exp.csv) emit("self_mask.csv", mask_to_csv(self_mask));
    if (exp.pgm) emit("self_mask.pgm", mask_to_pgm(self_mask));
    if (exp.json) emit("self_mask.json", mask_to_json(self_mask));
    if (exp.csv) emit("cross_mask.csv", mask_to_csv(cross_mask));
    if (exp.pgm) emit("cross_mask.pgm", mask_to_pgm(cross_mask));
    if (exp.json) emit("cross_mask.json", mask_to_json(cross_mask));
  }
  if (exp.rope) {
    if (exp.csv) emit("rope_base.csv", rope_coords_to_csv(base_table));
    if (exp.json) emit("rope_base.json", rope_coords_to_json(base_table));
    if (exp.csv) emit("rope_std.csv", rope_coords_to_csv(std_table));
    if (exp.json) emit("rope_std.json", rope_coords_to_json(std_table));
  }
  if (exp.attention_maps) {
    const FeatureSequence init{std::move(initial_tokens), features.heads};
    const std::size_t last = lattice.frames - 1;
    const Mat before =
        attention_map(init, base_table, nullptr, weights, 0, last);
    const Mat after =
        attention_map(init, std_table, nullptr, weights, 0, last);
    if (exp.csv) emit("attention_before.csv", matrix_to_csv(before));
    if (exp.pgm) emit("attention_before.pgm", matrix_to_pgm(before));
    if (exp.json) emit("attention_before.json", matrix_to_json(before));
    if (exp.csv) emit("attention_after.csv", matrix_to_csv(after));
    if (exp.pgm) emit("attention_after.pgm", matrix_to_pgm(after));
    if (exp.json) emit("attention_after.json", matrix_to_json(after));
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t0)
          .count();
  if (exp.report) {
    report.exports.push_back("report.json");
    write_text_file(
        (std::filesystem::path(config.out_dir) / "report.json").string(),
        report_to_json(report));
  }

  result.features = std::move(features);
  return result;
}

RunResult run_baseline(const PipelineConfig& config) {
  config.validate();
  const std::uint64_t seed = config.schedule.seed;
  const TokenLattice lattice = patchify(config.latent);
  const RopeTable base_table = build_3d_rope(lattice, config.rope);
  const TextEncoder encoder{config.latent.embed_dim, seed, kMaxPromptTokens};
  const ConditionEmbedding merged_cond =
      merged_condition(encoder, config.prompt);
  const BlockWeights weights = BlockWeights::seeded(
      {config.latent.embed_dim, config.model.heads, config.model.ff_mult,
       config.model.qk_alignment, tagged_seed("weights", seed)});
  FeatureSequence features = make_correlated_features(
      lattice, config.latent.embed_dim, config.model.heads,
      tagged_seed("features", seed), config.model.feature_correlation);

  RunResult result;
  result.report.seed = seed;
  result.report.lattice = lattice;
  result.report.schedule = config.schedule;
  result.report.precision =
      config.precision == Precision::kFloat32 ? "float32" : "float64";
  result.report.prompts.original = config.prompt;

  LoopContext ctx;
  ctx.config = &config;
  ctx.weights = &weights;
  ctx.base_table = &base_table;
  ctx.merged_cond = &merged_cond;
  ctx.lattice = &lattice;
  run_loop(ctx, features, result.report.steps);
  result.report.final_feature_hash = feature_hash(features);
  result.features = std::move(features);
  return result;
}

AttentionAnalysis analyze_attention(const PipelineConfig& config,
                                    std::size_t frame_a, std::size_t frame_b) {
  config.validate();
  const TokenLattice lattice = patchify(config.latent);
  if (frame_a >= lattice.frames || frame_b >= lattice.frames)
    throw Error(ErrorCode::OutOfBounds,
                "frame pair (" + std::to_string(frame_a) + ", " +
                    std::to_string(frame_b) + ") outside " +
                    std::to_string(lattice.frames) + " frames");
  const Trajectory traj = load_trajectory(config.trajectory_path);
  traj.validate(lattice);

  const std::uint64_t seed = config.schedule.seed;
  const RopeTable base_table = build_3d_rope(lattice, config.rope);
  const AnchorMode anchor_mode = config.schedule.three_d_aware
                                     ? AnchorMode::kMinBox
                                     : config.schedule.anchor_mode;
  const std::size_t anchor =
      select_anchor(traj, anchor_mode, tagged_seed("anchor", seed));
  const RopeTable std_table =
      std_rope(base_table, traj, anchor,
               {.allow_resample = config.schedule.three_d_aware});

  const BlockWeights weights = BlockWeights::seeded(
      {config.latent.embed_dim, config.model.heads, config.model.ff_mult,
       config.model.qk_alignment, tagged_seed("weights", seed)});
  const FeatureSequence features = make_correlated_features(
      lattice, config.latent.embed_dim, config.model.heads,
      tagged_seed("features", seed), config.model.feature_correlation);

  AttentionAnalysis out;
  out.frame_a = frame_a;
  out.frame_b = frame_b;
  Mat full;
  AttentionOptions options;
  options.capture_weights = &full;
  out.map_before = attention_map(features, base_table, nullptr, weights,
                                 frame_a, frame_b, options);
  out.score_before = inter_frame_fg_score(full, traj, lattice);
  out.map_after = attention_map(features, std_table, nullptr, weights,
                                frame_a, frame_b, options);
  out.score_after = inter_frame_fg_score(full, traj, lattice);
  return out;
}

}  // namespace trajctl

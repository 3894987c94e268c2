#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "trajctl/masking.hpp"
#include "trajctl/matrix.hpp"
#include "trajctl/rope.hpp"
#include "trajctl/trajectory.hpp"

namespace trajctl {

// Flattened token sequence entering a transformer block: L rows of width D,
// interpreted as `heads` slices of head_dim = D / heads.
struct FeatureSequence {
  Mat tokens;
  std::size_t heads = 1;

  std::size_t length() const { return tokens.rows; }
  std::size_t embed_dim() const { return tokens.cols; }
  std::size_t head_dim() const { return tokens.cols / heads; }

  void validate() const;  // D divisible by heads, finite entries
};

// Concatenated text-key matrix plus the foreground/background partition.
struct ConditionEmbedding {
  Mat keys;
  ConditionLayout layout;

  std::size_t key_count() const { return keys.rows; }
  void validate() const;
};

struct BlockWeightsConfig {
  std::size_t embed_dim = 64;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  // Mixes the key projection toward the query projection:
  //   W_k = qk_alignment * W_q + sqrt(1 - qk_alignment^2) * W_indep.
  // Trained attention exhibits aligned query/key maps, which is what lets
  // position-embedding similarity surface in attention scores; 0 gives fully
  // independent projections.
  double qk_alignment = 0.7;
  std::uint64_t seed = 0;
};

// Seeded random projections standing in for pretrained weights. The fill
// order (w_q, w_k_indep, w_v, w_o, w_ff1, w_ff2; row-major) is fixed, so the
// same seed regenerates bit-identical weights.
struct BlockWeights {
  std::size_t embed_dim = 0;
  std::size_t heads = 0;
  std::size_t ff_dim = 0;
  double qk_alignment = 0.0;
  std::uint64_t seed = 0;
  Mat w_q, w_k, w_v, w_o, w_ff1, w_ff2;

  std::size_t head_dim() const { return embed_dim / heads; }

  static BlockWeights seeded(const BlockWeightsConfig& config);
};

struct AttentionOptions {
  // Additive realization of a blocked pair. Any value that underflows the
  // post-softmax weight below 1e-12 is valid; exact -infinity is accepted.
  double sentinel = -1e18;
  // When set, receives the post-softmax attention weights averaged over
  // heads (query_count x key_count).
  Mat* capture_weights = nullptr;
};

// softmax(Q(x) K(kv)^T / sqrt(head_dim) + mask) V(kv), heads concatenated.
// No output projection is applied. Throws AllBlockedRow if some query row has
// every key blocked.
FeatureSequence masked_attention(const FeatureSequence& q_source,
                                 const ConditionEmbedding& kv_source,
                                 const AttentionMask* mask,
                                 const BlockWeights& weights,
                                 const AttentionOptions& options = {});
FeatureSequence masked_attention(const FeatureSequence& q_source,
                                 const FeatureSequence& kv_source,
                                 const AttentionMask* mask,
                                 const BlockWeights& weights,
                                 const AttentionOptions& options = {});

// Full joint attention over the flattened (frame, row, col) sequence with
// rotary rotation applied to Q and K from the table's per-token coordinates.
FeatureSequence self_attention_3d(const FeatureSequence& x,
                                  const RopeTable& table,
                                  const AttentionMask* mask,
                                  const BlockWeights& weights,
                                  const AttentionOptions& options = {});

// Post-softmax weights of the (frame_a queries x frame_b keys) block,
// averaged over heads. Entries lie in [0, 1].
Mat attention_map(const FeatureSequence& x, const RopeTable& table,
                  const AttentionMask* mask, const BlockWeights& weights,
                  std::size_t frame_a, std::size_t frame_b,
                  const AttentionOptions& options = {});

// Mean post-softmax weight over ordered pairs (query inside frame a's box,
// key inside frame b's box, a != b), from head-averaged full weights.
// Empty when the lattice has a single frame (no cross-frame pairs).
std::optional<double> inter_frame_fg_score(const Mat& head_avg_weights,
                                           const Trajectory& traj,
                                           const TokenLattice& lattice);

// Toy DiT block: pre-norm self-attention, optional pre-norm cross-attention,
// pre-norm feed-forward, each with a residual connection.
struct DitBlockInputs {
  const RopeTable* table = nullptr;          // required
  const AttentionMask* self_mask = nullptr;  // optional
  const ConditionEmbedding* cond = nullptr;  // optional; null = unconditional
  const AttentionMask* cross_mask = nullptr; // optional
};

FeatureSequence dit_block(const FeatureSequence& x,
                          const DitBlockInputs& inputs,
                          const BlockWeights& weights,
                          const AttentionOptions& options = {});

// Same block evaluated in single precision (inputs cast to float, result
// widened back); trades accuracy for speed.
FeatureSequence dit_block_f32(const FeatureSequence& x,
                              const DitBlockInputs& inputs,
                              const BlockWeights& weights,
                              const AttentionOptions& options = {});

// Seeded surrogate for a video latent: every token shares a common component
// with weight `correlation` (real latents are spatially correlated), plus
// per-token noise. correlation must lie in [0, 1].
FeatureSequence make_correlated_features(const TokenLattice& lattice,
                                         std::size_t embed_dim,
                                         std::size_t heads, std::uint64_t seed,
                                         double correlation);

}  // namespace trajctl

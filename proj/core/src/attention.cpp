#include "trajctl/attention.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "trajctl/det_rng.hpp"
#include "trajctl/errors.hpp"

namespace trajctl {
namespace {

void fill_normal(Mat& m, DetRng& rng, double scale) {
  for (double& v : m.data) v = rng.normal() * scale;
}

template <typename T>
void rotate_heads(Matrix<T>& m, const RopeTable& table, std::size_t heads) {
  const std::size_t hd = table.layout.head_dim;
  std::vector<double> angles(hd / 2);
  for (std::size_t i = 0; i < m.rows; ++i) {
    table.angles_into(i, angles.data());
    T* row = m.row(i);
    for (std::size_t h = 0; h < heads; ++h)
      rotate_pairs(row + h * hd, angles.data(), hd / 2);
  }
}

// softmax(Q K^T / sqrt(head_dim) + mask) V per head, heads concatenated.
// Score/weight arithmetic stays in double for both precisions; only the dot
// products and stored outputs are in T.
template <typename T>
Matrix<T> attention_kernel(const Matrix<T>& q, const Matrix<T>& k,
                           const Matrix<T>& v, std::size_t heads,
                           const AttentionMask* mask,
                           const AttentionOptions& options) {
  const std::size_t rows = q.rows;
  const std::size_t keys = k.rows;
  const std::size_t hd = q.cols / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  if (mask) {
    if (mask->query_count() != rows || mask->key_count() != keys)
      throw Error(ErrorCode::ShapeMismatch,
                  "mask is " + std::to_string(mask->query_count()) + "x" +
                      std::to_string(mask->key_count()) + " but attention is " +
                      std::to_string(rows) + "x" + std::to_string(keys));
    for (std::size_t i = 0; i < rows; ++i)
      if (mask->row_fully_blocked(i))
        throw Error(ErrorCode::AllBlockedRow,
                    "query row " + std::to_string(i) +
                        " has every key blocked");
  }

  Mat* capture = options.capture_weights;
  if (capture) *capture = Mat(rows, keys);

  Matrix<T> out(rows, q.cols);
  std::vector<double> scores(keys);
  std::vector<double> weights(keys);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < rows; ++i) {
      const T* qi = q.row(i) + off;
      for (std::size_t j = 0; j < keys; ++j) {
        const T* kj = k.row(j) + off;
        T acc = T(0);
        for (std::size_t d = 0; d < hd; ++d) acc += qi[d] * kj[d];
        scores[j] = static_cast<double>(acc) * inv_sqrt;
      }
      if (mask)
        for (std::uint32_t j : mask->blocked_keys(i))
          scores[j] += options.sentinel;

      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < keys; ++j) mx = std::max(mx, scores[j]);
      double z = 0.0;
      for (std::size_t j = 0; j < keys; ++j) {
        const double w = std::exp(scores[j] - mx);
        weights[j] = w;
        z += w;
      }
      T* oi = out.row(i) + off;
      for (std::size_t d = 0; d < hd; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j < keys; ++j)
          acc += weights[j] * static_cast<double>(v.row(j)[off + d]);
        oi[d] = static_cast<T>(acc / z);
      }
      if (capture) {
        double* ci = capture->row(i);
        for (std::size_t j = 0; j < keys; ++j)
          ci[j] += weights[j] / z / static_cast<double>(heads);
      }
    }
  }
  return out;
}

void check_projection(const FeatureSequence& q_source, std::size_t kv_width,
                      const BlockWeights& weights) {
  q_source.validate();
  if (q_source.embed_dim() != weights.embed_dim ||
      kv_width != weights.embed_dim)
    throw Error(ErrorCode::ShapeMismatch,
                "feature width " + std::to_string(q_source.embed_dim()) +
                    " / key width " + std::to_string(kv_width) +
                    " do not match weight width " +
                    std::to_string(weights.embed_dim));
  if (q_source.heads != weights.heads)
    throw Error(ErrorCode::ShapeMismatch,
                "sequence declares " + std::to_string(q_source.heads) +
                    " heads but weights were built for " +
                    std::to_string(weights.heads));
}

FeatureSequence cross_attention_impl(const FeatureSequence& q_source,
                                     const Mat& keys,
                                     const AttentionMask* mask,
                                     const BlockWeights& weights,
                                     const AttentionOptions& options) {
  check_projection(q_source, keys.cols, weights);
  const Mat q = matmul(q_source.tokens, weights.w_q);
  const Mat k = matmul(keys, weights.w_k);
  const Mat v = matmul(keys, weights.w_v);
  return {attention_kernel(q, k, v, weights.heads, mask, options),
          weights.heads};
}

// ---- toy DiT block -------------------------------------------------------

template <typename T>
void rmsnorm_rows(Matrix<T>& m) {
  constexpr double kEps = 1e-8;
  for (std::size_t i = 0; i < m.rows; ++i) {
    T* row = m.row(i);
    double ss = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double v = static_cast<double>(row[c]);
      ss += v * v;
    }
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(m.cols) + kEps);
    for (std::size_t c = 0; c < m.cols; ++c)
      row[c] = static_cast<T>(static_cast<double>(row[c]) * scale);
  }
}

template <typename T>
void gelu_inplace(Matrix<T>& m) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  for (T& v : m.data) {
    const double x = static_cast<double>(v);
    v = static_cast<T>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
  }
}

template <typename T>
void add_inplace(Matrix<T>& acc, const Matrix<T>& delta) {
  for (std::size_t i = 0; i < acc.data.size(); ++i)
    acc.data[i] += delta.data[i];
}

template <typename T>
struct WeightView {
  const Matrix<T>*w_q, *w_k, *w_v, *w_o, *w_ff1, *w_ff2;
};

template <typename T>
Matrix<T> dit_block_impl(const Matrix<T>& x_tokens, std::size_t heads,
                         const DitBlockInputs& inputs, const WeightView<T>& w,
                         const Matrix<T>* cond_keys,
                         const AttentionOptions& options) {
  // Self-attention sublayer (pre-norm, residual through w_o).
  Matrix<T> h = x_tokens;
  rmsnorm_rows(h);
  Matrix<T> q = matmul(h, *w.w_q);
  Matrix<T> k = matmul(h, *w.w_k);
  Matrix<T> v = matmul(h, *w.w_v);
  rotate_heads(q, *inputs.table, heads);
  rotate_heads(k, *inputs.table, heads);
  Matrix<T> attn =
      attention_kernel(q, k, v, heads, inputs.self_mask, options);
  Matrix<T> x1 = x_tokens;
  add_inplace(x1, matmul(attn, *w.w_o));

  // Optional cross-attention sublayer over the condition keys. The weight
  // capture, when requested, refers to the self-attention weights, so the
  // cross pass runs without it.
  if (cond_keys) {
    Matrix<T> h1 = x1;
    rmsnorm_rows(h1);
    AttentionOptions cross_options = options;
    cross_options.capture_weights = nullptr;
    Matrix<T> cq = matmul(h1, *w.w_q);
    Matrix<T> ck = matmul(*cond_keys, *w.w_k);
    Matrix<T> cv = matmul(*cond_keys, *w.w_v);
    Matrix<T> cross = attention_kernel(cq, ck, cv, heads, inputs.cross_mask,
                                       cross_options);
    add_inplace(x1, matmul(cross, *w.w_o));
  }

  // Feed-forward sublayer.
  Matrix<T> h2 = x1;
  rmsnorm_rows(h2);
  Matrix<T> ff = matmul(h2, *w.w_ff1);
  gelu_inplace(ff);
  add_inplace(x1, matmul(ff, *w.w_ff2));
  return x1;
}

void check_block_inputs(const FeatureSequence& x, const DitBlockInputs& inputs,
                        const BlockWeights& weights) {
  check_projection(x, weights.embed_dim, weights);
  if (!inputs.table)
    throw Error(ErrorCode::ShapeMismatch, "dit_block requires a rope table");
  if (inputs.table->lattice.size() != x.length())
    throw Error(ErrorCode::DimMismatch,
                "rope table covers " +
                    std::to_string(inputs.table->lattice.size()) +
                    " tokens but the sequence has " +
                    std::to_string(x.length()));
  if (inputs.table->layout.head_dim != x.head_dim())
    throw Error(ErrorCode::DimMismatch,
                "rope head_dim " +
                    std::to_string(inputs.table->layout.head_dim) +
                    " does not match sequence head_dim " +
                    std::to_string(x.head_dim()));
  if (inputs.cond) {
    inputs.cond->validate();
    if (inputs.cond->keys.cols != weights.embed_dim)
      throw Error(ErrorCode::WidthMismatch,
                  "condition key width " +
                      std::to_string(inputs.cond->keys.cols) +
                      " does not match embed_dim " +
                      std::to_string(weights.embed_dim));
  }
}

}  // namespace

void FeatureSequence::validate() const {
  if (heads == 0 || tokens.cols == 0 || tokens.cols % heads != 0)
    throw Error(ErrorCode::DimMismatch,
                "embed_dim " + std::to_string(tokens.cols) +
                    " is not divisible into " + std::to_string(heads) +
                    " heads");
  if (!tokens.all_finite())
    throw Error(ErrorCode::ShapeMismatch,
                "feature sequence contains non-finite entries");
}

void ConditionEmbedding::validate() const {
  layout.validate();
  if (layout.key_count() != keys.rows)
    throw Error(ErrorCode::SpanOverlap,
                "condition layout covers " +
                    std::to_string(layout.key_count()) + " keys but " +
                    std::to_string(keys.rows) + " rows were provided");
  if (!keys.all_finite())
    throw Error(ErrorCode::ShapeMismatch,
                "condition keys contain non-finite entries");
}

BlockWeights BlockWeights::seeded(const BlockWeightsConfig& config) {
  if (config.embed_dim == 0 || config.heads == 0 ||
      config.embed_dim % config.heads != 0)
    throw Error(ErrorCode::DimMismatch,
                "embed_dim " + std::to_string(config.embed_dim) +
                    " is not divisible into " + std::to_string(config.heads) +
                    " heads");
  if ((config.embed_dim / config.heads) % 2 != 0)
    throw Error(ErrorCode::OddGroup,
                "head_dim " +
                    std::to_string(config.embed_dim / config.heads) +
                    " must be even for rotary pairs");
  if (config.qk_alignment < 0.0 || config.qk_alignment > 1.0)
    throw Error(ErrorCode::ConfigError, "qk_alignment must lie in [0, 1]");
  if (config.ff_mult == 0)
    throw Error(ErrorCode::ConfigError, "ff_mult must be positive");

  BlockWeights w;
  w.embed_dim = config.embed_dim;
  w.heads = config.heads;
  w.ff_dim = config.embed_dim * config.ff_mult;
  w.qk_alignment = config.qk_alignment;
  w.seed = config.seed;

  const std::size_t d = config.embed_dim;
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double ff_scale = 1.0 / std::sqrt(static_cast<double>(w.ff_dim));

  DetRng rng(config.seed);
  w.w_q = Mat(d, d);
  fill_normal(w.w_q, rng, in_scale);
  Mat w_k_indep(d, d);
  fill_normal(w_k_indep, rng, in_scale);
  w.w_v = Mat(d, d);
  fill_normal(w.w_v, rng, in_scale);
  w.w_o = Mat(d, d);
  fill_normal(w.w_o, rng, in_scale);
  w.w_ff1 = Mat(d, w.ff_dim);
  fill_normal(w.w_ff1, rng, in_scale);
  w.w_ff2 = Mat(w.ff_dim, d);
  fill_normal(w.w_ff2, rng, ff_scale);

  const double a = config.qk_alignment;
  const double b = std::sqrt(1.0 - a * a);
  w.w_k = Mat(d, d);
  for (std::size_t i = 0; i < w.w_k.data.size(); ++i)
    w.w_k.data[i] = a * w.w_q.data[i] + b * w_k_indep.data[i];
  return w;
}

FeatureSequence masked_attention(const FeatureSequence& q_source,
                                 const ConditionEmbedding& kv_source,
                                 const AttentionMask* mask,
                                 const BlockWeights& weights,
                                 const AttentionOptions& options) {
  kv_source.validate();
  return cross_attention_impl(q_source, kv_source.keys, mask, weights,
                              options);
}

FeatureSequence masked_attention(const FeatureSequence& q_source,
                                 const FeatureSequence& kv_source,
                                 const AttentionMask* mask,
                                 const BlockWeights& weights,
                                 const AttentionOptions& options) {
  kv_source.validate();
  return cross_attention_impl(q_source, kv_source.tokens, mask, weights,
                              options);
}

FeatureSequence self_attention_3d(const FeatureSequence& x,
                                  const RopeTable& table,
                                  const AttentionMask* mask,
                                  const BlockWeights& weights,
                                  const AttentionOptions& options) {
  check_projection(x, weights.embed_dim, weights);
  if (table.lattice.size() != x.length())
    throw Error(ErrorCode::DimMismatch,
                "rope table covers " + std::to_string(table.lattice.size()) +
                    " tokens but the sequence has " +
                    std::to_string(x.length()));
  if (table.layout.head_dim != x.head_dim())
    throw Error(ErrorCode::DimMismatch,
                "rope head_dim " + std::to_string(table.layout.head_dim) +
                    " does not match sequence head_dim " +
                    std::to_string(x.head_dim()));
  Mat q = matmul(x.tokens, weights.w_q);
  Mat k = matmul(x.tokens, weights.w_k);
  Mat v = matmul(x.tokens, weights.w_v);
  rotate_heads(q, table, weights.heads);
  rotate_heads(k, table, weights.heads);
  return {attention_kernel(q, k, v, weights.heads, mask, options),
          weights.heads};
}

Mat attention_map(const FeatureSequence& x, const RopeTable& table,
                  const AttentionMask* mask, const BlockWeights& weights,
                  std::size_t frame_a, std::size_t frame_b,
                  const AttentionOptions& options) {
  const TokenLattice& lat = table.lattice;
  if (frame_a >= lat.frames || frame_b >= lat.frames)
    throw Error(ErrorCode::OutOfBounds,
                "frame pair (" + std::to_string(frame_a) + ", " +
                    std::to_string(frame_b) + ") outside " +
                    std::to_string(lat.frames) + " frames");
  Mat full;
  AttentionOptions capture_options = options;
  capture_options.capture_weights = &full;
  (void)self_attention_3d(x, table, mask, weights, capture_options);

  const std::size_t fs = lat.frame_size();
  Mat block(fs, fs);
  const std::size_t qa = lat.frame_begin(frame_a);
  const std::size_t kb = lat.frame_begin(frame_b);
  for (std::size_t i = 0; i < fs; ++i)
    for (std::size_t j = 0; j < fs; ++j)
      block.at(i, j) = full.at(qa + i, kb + j);
  if (options.capture_weights) *options.capture_weights = std::move(full);
  return block;
}

std::optional<double> inter_frame_fg_score(const Mat& head_avg_weights,
                                           const Trajectory& traj,
                                           const TokenLattice& lattice) {
  if (lattice.frames < 2) return std::nullopt;
  traj.validate(lattice);
  const std::size_t L = lattice.size();
  if (head_avg_weights.rows != L || head_avg_weights.cols != L)
    throw Error(ErrorCode::ShapeMismatch,
                "weights are " + std::to_string(head_avg_weights.rows) + "x" +
                    std::to_string(head_avg_weights.cols) +
                    " but the lattice has " + std::to_string(L) + " tokens");

  // Token lists per frame box, in flat-index order.
  std::vector<std::vector<std::size_t>> box_tokens(lattice.frames);
  for (std::size_t t = 0; t < lattice.frames; ++t) {
    const BoundingBox& b = traj.boxes[t];
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x)
        box_tokens[t].push_back(lattice.flat_index(t, static_cast<std::size_t>(y),
                                                   static_cast<std::size_t>(x)));
  }

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < lattice.frames; ++a)
    for (std::size_t b = 0; b < lattice.frames; ++b) {
      if (a == b) continue;
      for (std::size_t qi : box_tokens[a])
        for (std::size_t kj : box_tokens[b]) {
          sum += head_avg_weights.at(qi, kj);
          ++count;
        }
    }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

FeatureSequence dit_block(const FeatureSequence& x,
                          const DitBlockInputs& inputs,
                          const BlockWeights& weights,
                          const AttentionOptions& options) {
  check_block_inputs(x, inputs, weights);
  const WeightView<double> w{&weights.w_q, &weights.w_k, &weights.w_v,
                             &weights.w_o, &weights.w_ff1, &weights.w_ff2};
  const Mat* cond = inputs.cond ? &inputs.cond->keys : nullptr;
  return {dit_block_impl(x.tokens, x.heads, inputs, w, cond, options),
          x.heads};
}

FeatureSequence dit_block_f32(const FeatureSequence& x,
                              const DitBlockInputs& inputs,
                              const BlockWeights& weights,
                              const AttentionOptions& options) {
  check_block_inputs(x, inputs, weights);
  const MatF xq = to_float(x.tokens);
  const MatF wq = to_float(weights.w_q);
  const MatF wk = to_float(weights.w_k);
  const MatF wv = to_float(weights.w_v);
  const MatF wo = to_float(weights.w_o);
  const MatF wf1 = to_float(weights.w_ff1);
  const MatF wf2 = to_float(weights.w_ff2);
  const WeightView<float> w{&wq, &wk, &wv, &wo, &wf1, &wf2};
  MatF cond_f;
  const MatF* cond = nullptr;
  if (inputs.cond) {
    cond_f = to_float(inputs.cond->keys);
    cond = &cond_f;
  }
  return {to_double(dit_block_impl(xq, x.heads, inputs, w, cond, options)),
          x.heads};
}

FeatureSequence make_correlated_features(const TokenLattice& lattice,
                                         std::size_t embed_dim,
                                         std::size_t heads, std::uint64_t seed,
                                         double correlation) {
  if (correlation < 0.0 || correlation > 1.0)
    throw Error(ErrorCode::ConfigError, "correlation must lie in [0, 1]");
  FeatureSequence seq;
  seq.heads = heads;
  seq.tokens = Mat(lattice.size(), embed_dim);
  DetRng rng(seed);
  std::vector<double> shared(embed_dim);
  for (double& v : shared) v = rng.normal();
  const double wc = std::sqrt(correlation);
  const double wn = std::sqrt(1.0 - correlation);
  for (std::size_t i = 0; i < seq.tokens.rows; ++i) {
    double* row = seq.tokens.row(i);
    for (std::size_t c = 0; c < embed_dim; ++c)
      row[c] = wc * shared[c] + wn * rng.normal();
  }
  seq.validate();
  return seq;
}

}  // namespace trajctl

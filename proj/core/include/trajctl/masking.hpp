#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "trajctl/lattice.hpp"
#include "trajctl/rope.hpp"
#include "trajctl/trajectory.hpp"

namespace trajctl {

// Half-open key index range.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t j) const { return j >= begin && j < end; }
  bool operator==(const Span&) const = default;
};

// Partition of the concatenated condition keys into the foreground block and
// the background block. The two spans must be disjoint and cover
// [0, key_count).
struct ConditionLayout {
  Span fg_span;
  Span bg_span;

  std::size_t key_count() const { return fg_span.size() + bg_span.size(); }
  void validate() const;  // throws SpanOverlap

  bool operator==(const ConditionLayout&) const = default;
};

// Pass/block predicate over (query, key) pairs, stored as per-row blocked-key
// lists (memory O(|blocked|), not O(rows x cols)). Realized additively as
// 0 / sentinel only at attention time.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t query_count, std::size_t key_count,
                std::vector<std::vector<std::uint32_t>> blocked_per_row);

  std::size_t query_count() const { return rows_; }
  std::size_t key_count() const { return cols_; }

  bool blocked(std::size_t i, std::size_t j) const;
  const std::vector<std::uint32_t>& blocked_keys(std::size_t i) const {
    return per_row_[i];
  }
  bool row_fully_blocked(std::size_t i) const {
    return per_row_[i].size() == cols_;
  }

  std::size_t blocked_pair_count() const;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> blocked_pairs() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::vector<std::uint32_t>> per_row_;  // each sorted ascending
};

// (i, j) passes iff (i in fg and j in fg_span) or (i not in fg and j in
// bg_span); every other pair is blocked.
AttentionMask build_cross_mask(const TokenSet& fg_tokens,
                               const TokenLattice& lattice,
                               const ConditionLayout& cond);

// Tokens whose spatial (y, x) coordinate pair is shared with another token of
// the same frame.
struct RepeatSets {
  std::vector<TokenSet> per_frame;
  TokenSet all;
};
RepeatSets repeat_token_sets(const RopeTable& table,
                             const TokenLattice& lattice);

// Repeated-coordinate tokens minus foreground tokens.
TokenSet r_token_set(const TokenSet& repeat, const TokenSet& fg_tokens);

// Symmetric mask blocking exactly the pairs between foreground tokens and
// R-tokens, in both directions.
AttentionMask build_self_mask(const TokenSet& fg_tokens,
                              const TokenSet& r_tokens, std::size_t length);

}  // namespace trajctl

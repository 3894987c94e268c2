#include "trajctl/masking.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>

namespace trajctl {

void ConditionLayout::validate() const {
  if (fg_span.begin > fg_span.end || bg_span.begin > bg_span.end) {
    throw Error(ErrorCode::SpanOverlap, "span has begin > end");
  }
  const Span& lo = fg_span.begin <= bg_span.begin ? fg_span : bg_span;
  const Span& hi = fg_span.begin <= bg_span.begin ? bg_span : fg_span;
  // Empty spans sit at the boundary of the other span.
  if (lo.begin != 0 || lo.end != hi.begin || hi.end != key_count()) {
    throw Error(ErrorCode::SpanOverlap,
                "spans must be disjoint and cover [0, key_count)");
  }
}

AttentionMask::AttentionMask(
    std::size_t query_count, std::size_t key_count,
    std::vector<std::vector<std::uint32_t>> blocked_per_row)
    : rows_(query_count), cols_(key_count), per_row_(std::move(blocked_per_row)) {
  if (per_row_.size() != rows_) {
    throw Error(ErrorCode::ShapeMismatch,
                "mask row count does not match query count");
  }
  for (auto& row : per_row_) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    if (!row.empty() && row.back() >= cols_) {
      throw Error(ErrorCode::OutOfBounds, "blocked key outside key range");
    }
  }
}

bool AttentionMask::blocked(std::size_t i, std::size_t j) const {
  const auto& row = per_row_[i];
  return std::binary_search(row.begin(), row.end(),
                            static_cast<std::uint32_t>(j));
}

std::size_t AttentionMask::blocked_pair_count() const {
  std::size_t n = 0;
  for (const auto& row : per_row_) n += row.size();
  return n;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>>
AttentionMask::blocked_pairs() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(blocked_pair_count());
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::uint32_t j : per_row_[i]) {
      pairs.emplace_back(static_cast<std::uint32_t>(i), j);
    }
  }
  return pairs;
}

AttentionMask build_cross_mask(const TokenSet& fg_tokens,
                               const TokenLattice& lattice,
                               const ConditionLayout& cond) {
  cond.validate();
  const std::size_t length = lattice.size();
  if (!fg_tokens.empty() && fg_tokens.values().back() >= length) {
    throw Error(ErrorCode::OutOfBounds,
                "foreground token outside sequence of length " +
                    std::to_string(length));
  }

  auto span_keys = [](const Span& span) {
    std::vector<std::uint32_t> keys(span.size());
    for (std::size_t j = 0; j < keys.size(); ++j) {
      keys[j] = static_cast<std::uint32_t>(span.begin + j);
    }
    return keys;
  };
  const std::vector<std::uint32_t> fg_keys = span_keys(cond.fg_span);
  const std::vector<std::uint32_t> bg_keys = span_keys(cond.bg_span);

  std::vector<std::vector<std::uint32_t>> blocked(length);
  for (std::size_t i = 0; i < length; ++i) {
    // A foreground query passes only the foreground span, so it blocks the
    // background span, and vice versa.
    blocked[i] = fg_tokens.contains(static_cast<std::uint32_t>(i)) ? bg_keys
                                                                   : fg_keys;
  }
  return AttentionMask(length, cond.key_count(), std::move(blocked));
}

RepeatSets repeat_token_sets(const RopeTable& table,
                             const TokenLattice& lattice) {
  if (table.lattice != lattice || table.size() != lattice.size()) {
    throw Error(ErrorCode::ShapeMismatch,
                "rope table was built for a different lattice");
  }
  RepeatSets sets;
  sets.per_frame.resize(lattice.frames);
  for (std::size_t t = 0; t < lattice.frames; ++t) {
    const std::size_t begin = lattice.frame_begin(t);
    const std::size_t end = lattice.frame_begin(t + 1);
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> groups;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint64_t key =
          (static_cast<std::uint64_t>(static_cast<std::uint32_t>(
               table.coord_y[i]))
           << 32) |
          static_cast<std::uint32_t>(table.coord_x[i]);
      groups[key].push_back(static_cast<std::uint32_t>(i));
    }
    std::vector<std::uint32_t> members;
    for (const auto& [key, tokens] : groups) {
      if (tokens.size() >= 2) {
        members.insert(members.end(), tokens.begin(), tokens.end());
      }
    }
    sets.per_frame[t] = TokenSet(std::move(members));
    sets.all = TokenSet::set_union(sets.all, sets.per_frame[t]);
  }
  return sets;
}

TokenSet r_token_set(const TokenSet& repeat, const TokenSet& fg_tokens) {
  return TokenSet::set_difference(repeat, fg_tokens);
}

AttentionMask build_self_mask(const TokenSet& fg_tokens,
                              const TokenSet& r_tokens, std::size_t length) {
  if (!TokenSet::set_intersection(fg_tokens, r_tokens).empty()) {
    throw Error(ErrorCode::SetsOverlap,
                "foreground tokens and R-tokens must be disjoint");
  }
  for (const TokenSet* set : {&fg_tokens, &r_tokens}) {
    if (!set->empty() && set->values().back() >= length) {
      throw Error(ErrorCode::OutOfBounds,
                  "token outside sequence of length " +
                      std::to_string(length));
    }
  }
  std::vector<std::vector<std::uint32_t>> blocked(length);
  for (std::uint32_t i : fg_tokens.values()) blocked[i] = r_tokens.values();
  for (std::uint32_t i : r_tokens.values()) blocked[i] = fg_tokens.values();
  return AttentionMask(length, length, std::move(blocked));
}

}  // namespace trajctl

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajctl/errors.hpp"
#include "trajctl/lattice.hpp"

namespace trajctl {

// Axis-aligned box in token-grid units; min corner inclusive, max exclusive.
struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
  bool contains(std::size_t y, std::size_t x) const {
    return static_cast<int>(y) >= y0 && static_cast<int>(y) < y1 &&
           static_cast<int>(x) >= x0 && static_cast<int>(x) < x1;
  }
  bool operator==(const BoundingBox&) const = default;
};

// One box per latent frame.
struct Trajectory {
  std::vector<BoundingBox> boxes;

  std::size_t frames() const { return boxes.size(); }

  // Throws EmptyBox / OutOfBounds (naming the frame) if any box is degenerate
  // or falls outside the grid.
  void validate(const TokenLattice& lattice) const;
  void validate_shape_only() const;  // positivity/area checks without a grid

  bool is_static() const;
  bool operator==(const Trajectory&) const = default;
};

// Sorted, duplicate-free set of flat token positions.
class TokenSet {
 public:
  TokenSet() = default;
  explicit TokenSet(std::vector<std::uint32_t> members);

  bool contains(std::uint32_t position) const;
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  const std::vector<std::uint32_t>& values() const { return members_; }

  void insert(std::uint32_t position);

  static TokenSet set_difference(const TokenSet& a, const TokenSet& b);
  static TokenSet set_union(const TokenSet& a, const TokenSet& b);
  static TokenSet set_intersection(const TokenSet& a, const TokenSet& b);

  bool operator==(const TokenSet&) const = default;

 private:
  std::vector<std::uint32_t> members_;
};

// Trajectory document (JSON text). Schema:
//   {
//     "frames": <count>,
//     "mode": "perframe" | "keyframes",
//     "units": "tokens" | "pixels",          (optional, default "tokens")
//     "pixel_divisor": <count>,              (required iff units == "pixels";
//                                             VAE spatial stride x patch size)
//     "boxes": [[frame, x0, y0, x1, y1], ...]
//   }
// Unknown fields are rejected. Keyframes are linearly interpolated per corner
// (rounded half-up); frames before the first / after the last keyframe hold
// the nearest keyframe box. Pixel boxes are converted outward (floor mins,
// ceil maxs) so the pixel region is always covered.
Trajectory parse_trajectory(const std::string& document_text);
Trajectory load_trajectory(const std::string& path);

TokenSet foreground_token_set(const Trajectory& traj,
                              const TokenLattice& lattice);

std::size_t min_box_frame(const Trajectory& traj);

}  // namespace trajctl

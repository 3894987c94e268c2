#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "trajctl/lattice.hpp"
#include "trajctl/matrix.hpp"
#include "trajctl/trajectory.hpp"

namespace trajctl {

// Per-axis rotary channel split. Each group rotates adjacent channel pairs,
// so every group size must be even.
struct RopeLayout {
  std::size_t head_dim = 16;
  std::size_t channels_t = 4;
  std::size_t channels_y = 6;
  std::size_t channels_x = 6;
  double theta_base = 10000.0;

  // head_dim * (1/4, 3/8, 3/8), rounded to even.
  static RopeLayout default_split(std::size_t head_dim,
                                  double theta_base = 10000.0);

  void validate() const;
  std::size_t pair_count() const { return head_dim / 2; }

  bool operator==(const RopeLayout&) const = default;
};

// Integer (t, y, x) coordinate per token. Angles are derived on demand, so
// transforms edit coordinates and repeated-coordinate detection stays exact
// integer comparison.
struct RopeTable {
  TokenLattice lattice;
  RopeLayout layout;
  std::vector<int> coord_t;
  std::vector<int> coord_y;
  std::vector<int> coord_x;

  std::size_t size() const { return coord_t.size(); }

  // Realized rotary angles for one token: temporal pairs, then row pairs,
  // then column pairs. Length == layout.pair_count().
  std::vector<double> angles(std::size_t token) const;
  void angles_into(std::size_t token, double* out) const;
};

// angle_k = position * theta_base^(-2k / group_size). Positions may be
// negative; lattice coordinates are non-negative but relative-position checks
// exercise both signs.
std::vector<double> rope_angles_1d(std::int64_t position,
                                   std::size_t group_size, double theta_base);

RopeTable build_3d_rope(const TokenLattice& lattice, const RopeLayout& layout);

// Rotates adjacent channel pairs of each row by the token's angles.
// features must be (table.size() x layout.head_dim).
Mat apply_rope(const Mat& features, const RopeTable& table);

// In-place pair rotation used by the attention kernels.
template <typename T>
void rotate_pairs(T* vec, const double* angles, std::size_t pair_count) {
  for (std::size_t k = 0; k < pair_count; ++k) {
    const double c = std::cos(angles[k]);
    const double s = std::sin(angles[k]);
    const double v0 = static_cast<double>(vec[2 * k]);
    const double v1 = static_cast<double>(vec[2 * k + 1]);
    vec[2 * k] = static_cast<T>(v0 * c - v1 * s);
    vec[2 * k + 1] = static_cast<T>(v0 * s + v1 * c);
  }
}

enum class AnchorMode { kRandom, kMinBox };

// kRandom draws uniformly from [0, frames) with the supplied seed;
// kMinBox picks the minimum-area box (ties to the lowest frame).
std::size_t select_anchor(const Trajectory& traj, AnchorMode mode,
                          std::uint64_t seed = 0);

// Row-major grid of (y, x) coordinate pairs.
struct CoordGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::array<int, 2>> yx;

  CoordGrid() = default;
  CoordGrid(std::size_t r, std::size_t c) : rows(r), cols(c), yx(r * c) {}

  std::array<int, 2>& at(std::size_t r, std::size_t c) {
    return yx[r * cols + c];
  }
  const std::array<int, 2>& at(std::size_t r, std::size_t c) const {
    return yx[r * cols + c];
  }
};

// output[r][c] = anchor[floor(r * a_h / b_h)][floor(c * a_w / b_w)].
// Maps both up and down despite the name.
CoordGrid nn_upsample_box(const CoordGrid& anchor, std::size_t target_h,
                          std::size_t target_w);

struct StdRopeOptions {
  // When trajectory boxes differ in shape from the anchor box, resample the
  // anchor coordinates to fit. With resampling off this raises
  // BoxSizeMismatch instead.
  bool allow_resample = true;
};

// Overwrites the spatial coordinates inside each frame's box with the anchor
// box's coordinates in raster order. Temporal coordinates and tokens outside
// the boxes are untouched.
RopeTable std_rope(const RopeTable& table, const Trajectory& traj,
                   std::size_t anchor_frame, StdRopeOptions options = {});

// Anchor = minimum-area box; anchor coordinates are nearest-neighbor
// resampled to each frame's box shape, so coordinate density tracks box size.
RopeTable std_rope_3d_aware(const RopeTable& table, const Trajectory& traj);

}  // namespace trajctl

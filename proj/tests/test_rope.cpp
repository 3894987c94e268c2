#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "trajctl/det_rng.hpp"
#include "trajctl/rope.hpp"

using namespace trajctl;
using testutil::thrown_code;

namespace {

constexpr double kPi = 3.14159265358979323846;

RopeTable demo_table(std::size_t f, std::size_t r, std::size_t c,
                     std::size_t head_dim = 16) {
  return build_3d_rope(TokenLattice{f, r, c},
                       RopeLayout::default_split(head_dim));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out += a[i] * b[i];
  return out;
}

}  // namespace

TEST_CASE("default channel split") {
  const RopeLayout l16 = RopeLayout::default_split(16);
  CHECK(l16.channels_t == 4);
  CHECK(l16.channels_y == 6);
  CHECK(l16.channels_x == 6);

  const RopeLayout l128 = RopeLayout::default_split(128);
  CHECK(l128.channels_t == 32);
  CHECK(l128.channels_y == 48);
  CHECK(l128.channels_x == 48);
}

TEST_CASE("layout validation") {
  CHECK(thrown_code([] { RopeLayout::default_split(15); }) ==
        ErrorCode::OddGroup);

  RopeLayout bad = RopeLayout::default_split(16);
  bad.channels_t = 3;
  bad.channels_y = 7;
  CHECK(thrown_code([&] { bad.validate(); }) == ErrorCode::OddGroup);

  RopeLayout gap = RopeLayout::default_split(16);
  gap.channels_x = 4;  // 4 + 6 + 4 != 16
  CHECK(thrown_code([&] { gap.validate(); }) == ErrorCode::DimMismatch);

  RopeLayout zero = RopeLayout::default_split(16);
  zero.channels_t = 0;
  zero.channels_y = 10;
  CHECK(thrown_code([&] { zero.validate(); }) == ErrorCode::OddGroup);

  RopeLayout theta = RopeLayout::default_split(16);
  theta.theta_base = 0.0;
  CHECK(thrown_code([&] { theta.validate(); }) == ErrorCode::ConfigError);
}

TEST_CASE("rotary frequency ladder") {
  const std::vector<double> zero = rope_angles_1d(0, 8, 10000.0);
  for (double a : zero) CHECK(a == 0.0);

  const std::vector<double> unit = rope_angles_1d(1, 4, 10000.0);
  REQUIRE(unit.size() == 2);
  CHECK(unit[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(unit[1] == doctest::Approx(0.01).epsilon(1e-15));

  CHECK(thrown_code([] { rope_angles_1d(1, 5, 10000.0); }) ==
        ErrorCode::OddGroup);

  // Negative positions mirror positive ones.
  const std::vector<double> neg = rope_angles_1d(-3, 8, 10000.0);
  const std::vector<double> pos = rope_angles_1d(3, 8, 10000.0);
  for (std::size_t k = 0; k < neg.size(); ++k) CHECK(neg[k] == -pos[k]);

  // Against the exp/log oracle over a spread of positions and groups.
  for (std::int64_t p : {-64LL, -7LL, 0LL, 1LL, 13LL, 64LL}) {
    for (std::size_t g : {2u, 4u, 16u, 64u}) {
      const std::vector<double> got = rope_angles_1d(p, g, 10000.0);
      const std::vector<double> want = oracle::rope_angles(p, g, 10000.0);
      for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("3d table stores lattice coordinates") {
  const RopeTable table = demo_table(2, 2, 2);

  // Origin token: all-zero angles.
  for (double a : table.angles(0)) CHECK(a == 0.0);

  // All 8 coordinate triples distinct.
  std::map<std::array<int, 3>, int> seen;
  for (std::size_t i = 0; i < table.size(); ++i) {
    seen[{table.coord_t[i], table.coord_y[i], table.coord_x[i]}]++;
  }
  CHECK(seen.size() == 8);

  // Same (y, x), different t: spatial angle blocks identical.
  const TokenLattice lat{2, 2, 2};
  const std::size_t a = lat.flat_index(0, 1, 1);
  const std::size_t b = lat.flat_index(1, 1, 1);
  const std::vector<double> aa = table.angles(a);
  const std::vector<double> ab = table.angles(b);
  const std::size_t spatial_begin = table.layout.channels_t / 2;
  for (std::size_t k = spatial_begin; k < aa.size(); ++k) {
    CHECK(aa[k] == ab[k]);
  }
  CHECK(aa[0] != ab[0]);
}

TEST_CASE("pair rotation basics") {
  std::vector<double> v = {1.0, 0.0};
  const double quarter = kPi / 2.0;
  rotate_pairs(v.data(), &quarter, 1);
  CHECK(v[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(v[1] == doctest::Approx(1.0).epsilon(1e-15));

  // Zero angles leave features bit-identical.
  DetRng rng(7);
  const Mat before = oracle::random_mat(rng, 4, 16);
  Mat after = before;
  const std::vector<double> zeros(8, 0.0);
  for (std::size_t i = 0; i < after.rows; ++i) {
    rotate_pairs(after.row(i), zeros.data(), zeros.size());
  }
  CHECK(after.data == before.data);
}

TEST_CASE("relative position law") {
  DetRng rng(11);
  for (int probe = 0; probe < 20; ++probe) {
    const std::size_t group = 16;
    const auto m = static_cast<std::int64_t>(rng.uniform_below(129)) - 64;
    const auto n = static_cast<std::int64_t>(rng.uniform_below(129)) - 64;
    std::vector<double> q(group), k(group);
    for (double& x : q) x = rng.normal();
    for (double& x : k) x = rng.normal();

    std::vector<double> qm = q;
    std::vector<double> kn = k;
    std::vector<double> qmn = q;
    oracle::rotate(qm, rope_angles_1d(m, group, 10000.0));
    oracle::rotate(kn, rope_angles_1d(n, group, 10000.0));
    oracle::rotate(qmn, rope_angles_1d(m - n, group, 10000.0));
    CHECK(std::abs(dot(qm, kn) - dot(qmn, k)) <= 1e-9);
  }
}

TEST_CASE("apply_rope matches the per-token oracle") {
  const RopeTable table = demo_table(2, 3, 3);
  DetRng rng(3);
  const Mat features = oracle::random_mat(rng, table.size(), 16);
  const Mat rotated = apply_rope(features, table);
  for (std::size_t i = 0; i < features.rows; ++i) {
    std::vector<double> want(features.row(i), features.row(i) + 16);
    oracle::rotate(want, oracle::table_angles(table, i));
    for (std::size_t d = 0; d < 16; ++d) {
      CHECK(rotated.at(i, d) == doctest::Approx(want[d]).epsilon(1e-12));
    }
  }

  const Mat wrong(table.size(), 8);
  CHECK(thrown_code([&] { apply_rope(wrong, table); }) ==
        ErrorCode::DimMismatch);
}

TEST_CASE("coordinate transform: moving box onto the anchor") {
  const RopeTable base = demo_table(2, 4, 4);
  Trajectory traj;
  traj.boxes = {BoundingBox{0, 0, 2, 2}, BoundingBox{2, 2, 4, 4}};

  const RopeTable out = std_rope(base, traj, 0);
  const TokenLattice lat{2, 4, 4};

  // Frame-1 box tokens carry the anchor's spatial coords in raster order.
  const std::array<std::array<int, 2>, 4> want = {
      {{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
  std::size_t n = 0;
  for (std::size_t y = 2; y < 4; ++y) {
    for (std::size_t x = 2; x < 4; ++x, ++n) {
      const std::size_t tok = lat.flat_index(1, y, x);
      CHECK(out.coord_y[tok] == want[n][0]);
      CHECK(out.coord_x[tok] == want[n][1]);
      CHECK(out.coord_t[tok] == 1);  // temporal coordinate untouched
    }
  }

  // Everything outside both boxes is untouched (frame-0 box maps onto
  // itself, so comparing all non-frame-1-box tokens is fine).
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const TokenLattice::Coords c = lat.coords(i);
    if (c.t == 1 && traj.boxes[1].contains(c.y, c.x)) continue;
    CHECK(out.coord_y[i] == base.coord_y[i]);
    CHECK(out.coord_x[i] == base.coord_x[i]);
  }
  CHECK(out.coord_t == base.coord_t);
}

TEST_CASE("coordinate transform: static trajectory is a no-op") {
  const RopeTable base = demo_table(3, 4, 4);
  Trajectory still;
  still.boxes.assign(3, BoundingBox{1, 1, 3, 3});
  const RopeTable out = std_rope(base, still, 0);
  CHECK(out.coord_t == base.coord_t);
  CHECK(out.coord_y == base.coord_y);
  CHECK(out.coord_x == base.coord_x);
}

TEST_CASE("coordinate transform: temporal multiset invariant") {
  const RopeTable base = demo_table(3, 4, 4);
  DetRng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Trajectory traj =
        oracle::random_trajectory(rng, base.lattice, /*same_size=*/true);
    const std::size_t anchor = rng.uniform_below(traj.frames());
    const RopeTable out = std_rope(base, traj, anchor);
    CHECK(out.coord_t == base.coord_t);
  }
}

TEST_CASE("coordinate transform error paths") {
  const RopeTable base = demo_table(2, 4, 4);
  Trajectory traj;
  traj.boxes = {BoundingBox{0, 0, 2, 2}, BoundingBox{2, 2, 4, 4}};
  CHECK(thrown_code([&] { std_rope(base, traj, 2); }) == ErrorCode::OutOfBounds);

  Trajectory grow;
  grow.boxes = {BoundingBox{0, 0, 2, 2}, BoundingBox{0, 0, 4, 4}};
  CHECK(thrown_code([&] {
          std_rope(base, grow, 0, StdRopeOptions{/*allow_resample=*/false});
        }) == ErrorCode::BoxSizeMismatch);

  Trajectory wrong_frames;
  wrong_frames.boxes = {BoundingBox{0, 0, 2, 2}};
  CHECK(thrown_code([&] { std_rope(base, wrong_frames, 0); }) ==
        ErrorCode::FrameCountMismatch);
}

TEST_CASE("anchor selection") {
  Trajectory traj;  // areas 9, 4, 9
  traj.boxes = {BoundingBox{0, 0, 3, 3}, BoundingBox{0, 0, 2, 2},
                BoundingBox{1, 1, 4, 4}};
  CHECK(select_anchor(traj, AnchorMode::kMinBox, 0) == 1);
  CHECK(select_anchor(traj, AnchorMode::kRandom, 42) ==
        select_anchor(traj, AnchorMode::kRandom, 42));

  Trajectory four;
  four.boxes.assign(4, BoundingBox{0, 0, 2, 2});
  std::array<int, 4> hits = {0, 0, 0, 0};
  for (std::uint64_t s = 0; s < 10000; ++s) {
    hits[select_anchor(four, AnchorMode::kRandom, s)]++;
  }
  for (int h : hits) {
    CHECK(h > 2050);  // within 4.5 percentage points of uniform 25%
    CHECK(h < 2950);
  }
}

TEST_CASE("nearest neighbor coordinate resampling") {
  CoordGrid anchor(2, 2);
  anchor.at(0, 0) = {0, 0};
  anchor.at(0, 1) = {0, 1};
  anchor.at(1, 0) = {1, 0};
  anchor.at(1, 1) = {1, 1};

  // Equal size: identity copy.
  const CoordGrid same = nn_upsample_box(anchor, 2, 2);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) CHECK(same.at(r, c) == anchor.at(r, c));
  }

  // 1x1 anchor: constant fill.
  CoordGrid dot_grid(1, 1);
  dot_grid.at(0, 0) = {5, 7};
  const CoordGrid threes = nn_upsample_box(dot_grid, 3, 3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(threes.at(r, c) == std::array<int, 2>{5, 7});
    }
  }

  // 2x2 -> 4x4: each anchor cell becomes a 2x2 block.
  const CoordGrid four = nn_upsample_box(anchor, 4, 4);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(four.at(r, c) == anchor.at(r / 2, c / 2));
    }
  }

  // Downsampling follows the same floor map.
  const CoordGrid one = nn_upsample_box(anchor, 1, 1);
  CHECK(one.at(0, 0) == anchor.at(0, 0));
}

TEST_CASE("size-aware transform resamples the anchor box") {
  const RopeTable base = demo_table(3, 8, 8);
  Trajectory grow;  // 2x2 -> 4x4 -> 4x4
  grow.boxes = {BoundingBox{0, 0, 2, 2}, BoundingBox{2, 2, 6, 6},
                BoundingBox{4, 4, 8, 8}};

  const RopeTable out = std_rope_3d_aware(base, grow);
  const TokenLattice lat{3, 8, 8};

  // The anchor is the min-area box (frame 0, 2x2). In the 4x4 frames each of
  // its four coords appears exactly 4 times.
  for (std::size_t t : {std::size_t{1}, std::size_t{2}}) {
    std::map<std::array<int, 2>, int> counts;
    const BoundingBox& b = grow.boxes[t];
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        const std::size_t tok = lat.flat_index(t, static_cast<std::size_t>(y),
                                               static_cast<std::size_t>(x));
        counts[{out.coord_y[tok], out.coord_x[tok]}]++;
      }
    }
    CHECK(counts.size() == 4);
    for (const auto& [coord, count] : counts) CHECK(count == 4);
  }
  CHECK(out.coord_t == base.coord_t);

  // Constant-size trajectories reduce to the plain transform with the
  // min-area anchor.
  Trajectory still;
  still.boxes = {BoundingBox{0, 0, 3, 3}, BoundingBox{2, 2, 5, 5},
                 BoundingBox{5, 5, 8, 8}};
  const RopeTable aware = std_rope_3d_aware(base, still);
  const RopeTable plain = std_rope(base, still, min_box_frame(still));
  CHECK(aware.coord_y == plain.coord_y);
  CHECK(aware.coord_x == plain.coord_x);
}

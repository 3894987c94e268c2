#include "trajctl/rope.hpp"

#include <cmath>
#include <string>

#include "trajctl/det_rng.hpp"

namespace trajctl {

RopeLayout RopeLayout::default_split(std::size_t head_dim, double theta_base) {
  auto even_round = [](double v) {
    return 2 * static_cast<std::size_t>(std::floor(v / 2.0 + 0.5));
  };
  RopeLayout layout;
  layout.head_dim = head_dim;
  layout.theta_base = theta_base;
  layout.channels_t = even_round(static_cast<double>(head_dim) / 4.0);
  layout.channels_y = even_round(3.0 * static_cast<double>(head_dim) / 8.0);
  layout.channels_x = head_dim - layout.channels_t - layout.channels_y;
  layout.validate();
  return layout;
}

void RopeLayout::validate() const {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw Error(ErrorCode::OddGroup, "head_dim must be a positive even count");
  }
  if (channels_t % 2 != 0 || channels_y % 2 != 0 || channels_x % 2 != 0) {
    throw Error(ErrorCode::OddGroup,
                "every rotary channel group must be even");
  }
  if (channels_t == 0 || channels_y == 0 || channels_x == 0) {
    throw Error(ErrorCode::OddGroup,
                "every rotary channel group must be non-empty");
  }
  if (channels_t + channels_y + channels_x != head_dim) {
    throw Error(ErrorCode::DimMismatch,
                "channel groups must sum to head_dim (" +
                    std::to_string(channels_t) + "+" +
                    std::to_string(channels_y) + "+" +
                    std::to_string(channels_x) +
                    " != " + std::to_string(head_dim) + ")");
  }
  if (theta_base <= 0.0) {
    throw Error(ErrorCode::ConfigError, "theta_base must be positive");
  }
}

std::vector<double> rope_angles_1d(std::int64_t position,
                                   std::size_t group_size, double theta_base) {
  if (group_size == 0 || group_size % 2 != 0) {
    throw Error(ErrorCode::OddGroup,
                "rotary group size must be a positive even count");
  }
  std::vector<double> angles(group_size / 2);
  for (std::size_t k = 0; k < angles.size(); ++k) {
    const double freq =
        std::pow(theta_base, -2.0 * static_cast<double>(k) /
                                 static_cast<double>(group_size));
    angles[k] = static_cast<double>(position) * freq;
  }
  return angles;
}

RopeTable build_3d_rope(const TokenLattice& lattice, const RopeLayout& layout) {
  layout.validate();
  RopeTable table;
  table.lattice = lattice;
  table.layout = layout;
  const std::size_t n = lattice.size();
  table.coord_t.resize(n);
  table.coord_y.resize(n);
  table.coord_x.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenLattice::Coords c = lattice.coords(i);
    table.coord_t[i] = static_cast<int>(c.t);
    table.coord_y[i] = static_cast<int>(c.y);
    table.coord_x[i] = static_cast<int>(c.x);
  }
  return table;
}

void RopeTable::angles_into(std::size_t token, double* out) const {
  const std::size_t nt = layout.channels_t / 2;
  const std::size_t ny = layout.channels_y / 2;
  const std::size_t nx = layout.channels_x / 2;
  auto fill = [&](double coord, std::size_t group, std::size_t count,
                  double* dst) {
    for (std::size_t k = 0; k < count; ++k) {
      const double freq =
          std::pow(layout.theta_base,
                   -2.0 * static_cast<double>(k) / static_cast<double>(group));
      dst[k] = coord * freq;
    }
  };
  fill(coord_t[token], layout.channels_t, nt, out);
  fill(coord_y[token], layout.channels_y, ny, out + nt);
  fill(coord_x[token], layout.channels_x, nx, out + nt + ny);
}

std::vector<double> RopeTable::angles(std::size_t token) const {
  std::vector<double> out(layout.pair_count());
  angles_into(token, out.data());
  return out;
}

Mat apply_rope(const Mat& features, const RopeTable& table) {
  if (features.rows != table.size() || features.cols != table.layout.head_dim) {
    throw Error(ErrorCode::DimMismatch,
                "features must be (tokens x head_dim) = (" +
                    std::to_string(table.size()) + " x " +
                    std::to_string(table.layout.head_dim) + "), got (" +
                    std::to_string(features.rows) + " x " +
                    std::to_string(features.cols) + ")");
  }
  Mat out = features;
  std::vector<double> angles(table.layout.pair_count());
  for (std::size_t i = 0; i < out.rows; ++i) {
    table.angles_into(i, angles.data());
    rotate_pairs(out.row(i), angles.data(), angles.size());
  }
  return out;
}

std::size_t select_anchor(const Trajectory& traj, AnchorMode mode,
                          std::uint64_t seed) {
  traj.validate_shape_only();
  if (mode == AnchorMode::kMinBox) return min_box_frame(traj);
  DetRng rng(seed);
  return static_cast<std::size_t>(rng.uniform_below(traj.frames()));
}

CoordGrid nn_upsample_box(const CoordGrid& anchor, std::size_t target_h,
                          std::size_t target_w) {
  CoordGrid out(target_h, target_w);
  for (std::size_t r = 0; r < target_h; ++r) {
    const std::size_t src_r = r * anchor.rows / target_h;
    for (std::size_t c = 0; c < target_w; ++c) {
      const std::size_t src_c = c * anchor.cols / target_w;
      out.at(r, c) = anchor.at(src_r, src_c);
    }
  }
  return out;
}

namespace {

CoordGrid box_coord_grid(const RopeTable& table, std::size_t frame,
                         const BoundingBox& box) {
  CoordGrid grid(static_cast<std::size_t>(box.height()),
                 static_cast<std::size_t>(box.width()));
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const std::size_t token = table.lattice.flat_index(
          frame, static_cast<std::size_t>(box.y0) + r,
          static_cast<std::size_t>(box.x0) + c);
      grid.at(r, c) = {table.coord_y[token], table.coord_x[token]};
    }
  }
  return grid;
}

}  // namespace

RopeTable std_rope(const RopeTable& table, const Trajectory& traj,
                   std::size_t anchor_frame, StdRopeOptions options) {
  traj.validate(table.lattice);
  if (anchor_frame >= traj.frames()) {
    throw Error(ErrorCode::OutOfBounds,
                "anchor frame " + std::to_string(anchor_frame) +
                    " outside trajectory of " +
                    std::to_string(traj.frames()) + " frames");
  }

  const BoundingBox& anchor_box = traj.boxes[anchor_frame];
  const CoordGrid anchor = box_coord_grid(table, anchor_frame, anchor_box);

  RopeTable out = table;
  for (std::size_t t = 0; t < traj.frames(); ++t) {
    const BoundingBox& box = traj.boxes[t];
    const auto box_h = static_cast<std::size_t>(box.height());
    const auto box_w = static_cast<std::size_t>(box.width());
    CoordGrid coords;
    if (box_h == anchor.rows && box_w == anchor.cols) {
      coords = anchor;
    } else if (options.allow_resample) {
      coords = nn_upsample_box(anchor, box_h, box_w);
    } else {
      throw Error(ErrorCode::BoxSizeMismatch,
                  "frame " + std::to_string(t) + " box is " +
                      std::to_string(box_w) + "x" + std::to_string(box_h) +
                      " but anchor box is " + std::to_string(anchor.cols) +
                      "x" + std::to_string(anchor.rows) +
                      " and resampling is disabled");
    }
    for (std::size_t r = 0; r < box_h; ++r) {
      for (std::size_t c = 0; c < box_w; ++c) {
        const std::size_t token = out.lattice.flat_index(
            t, static_cast<std::size_t>(box.y0) + r,
            static_cast<std::size_t>(box.x0) + c);
        out.coord_y[token] = coords.at(r, c)[0];
        out.coord_x[token] = coords.at(r, c)[1];
      }
    }
  }
  return out;
}

RopeTable std_rope_3d_aware(const RopeTable& table, const Trajectory& traj) {
  return std_rope(table, traj, min_box_frame(traj),
                  StdRopeOptions{/*allow_resample=*/true});
}

}  // namespace trajctl

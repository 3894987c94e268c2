#include "trajctl/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace trajctl {

namespace {

using nlohmann::json;

void check_box_positive(const BoundingBox& box, std::size_t frame) {
  if (box.x0 < 0 || box.y0 < 0) {
    throw Error(ErrorCode::OutOfBounds,
                "frame " + std::to_string(frame) + ": negative box corner");
  }
  if (box.x0 >= box.x1 || box.y0 >= box.y1) {
    throw Error(ErrorCode::EmptyBox,
                "frame " + std::to_string(frame) + ": box has no area");
  }
}

int round_half_up(double v) {
  return static_cast<int>(std::floor(v + 0.5));
}

}  // namespace

void Trajectory::validate_shape_only() const {
  if (boxes.empty()) {
    throw Error(ErrorCode::FrameCountMismatch, "trajectory has no frames");
  }
  for (std::size_t t = 0; t < boxes.size(); ++t) {
    check_box_positive(boxes[t], t);
  }
}

void Trajectory::validate(const TokenLattice& lattice) const {
  validate_shape_only();
  if (boxes.size() != lattice.frames) {
    throw Error(ErrorCode::FrameCountMismatch,
                "trajectory has " + std::to_string(boxes.size()) +
                    " boxes but lattice has " +
                    std::to_string(lattice.frames) + " frames");
  }
  for (std::size_t t = 0; t < boxes.size(); ++t) {
    const BoundingBox& b = boxes[t];
    if (b.x1 > static_cast<int>(lattice.cols) ||
        b.y1 > static_cast<int>(lattice.rows)) {
      throw Error(ErrorCode::OutOfBounds,
                  "frame " + std::to_string(t) + ": box exceeds token grid " +
                      std::to_string(lattice.rows) + "x" +
                      std::to_string(lattice.cols));
    }
  }
}

bool Trajectory::is_static() const {
  for (const BoundingBox& b : boxes) {
    if (!(b == boxes.front())) return false;
  }
  return true;
}

TokenSet::TokenSet(std::vector<std::uint32_t> members)
    : members_(std::move(members)) {
  std::sort(members_.begin(), members_.end());
  members_.erase(std::unique(members_.begin(), members_.end()),
                 members_.end());
}

bool TokenSet::contains(std::uint32_t position) const {
  return std::binary_search(members_.begin(), members_.end(), position);
}

void TokenSet::insert(std::uint32_t position) {
  auto it = std::lower_bound(members_.begin(), members_.end(), position);
  if (it == members_.end() || *it != position) members_.insert(it, position);
}

TokenSet TokenSet::set_difference(const TokenSet& a, const TokenSet& b) {
  std::vector<std::uint32_t> out;
  std::set_difference(a.members_.begin(), a.members_.end(),
                      b.members_.begin(), b.members_.end(),
                      std::back_inserter(out));
  TokenSet result;
  result.members_ = std::move(out);
  return result;
}

TokenSet TokenSet::set_union(const TokenSet& a, const TokenSet& b) {
  std::vector<std::uint32_t> out;
  std::set_union(a.members_.begin(), a.members_.end(), b.members_.begin(),
                 b.members_.end(), std::back_inserter(out));
  TokenSet result;
  result.members_ = std::move(out);
  return result;
}

TokenSet TokenSet::set_intersection(const TokenSet& a, const TokenSet& b) {
  std::vector<std::uint32_t> out;
  std::set_intersection(a.members_.begin(), a.members_.end(),
                        b.members_.begin(), b.members_.end(),
                        std::back_inserter(out));
  TokenSet result;
  result.members_ = std::move(out);
  return result;
}

namespace {

struct BoxRecord {
  std::size_t frame;
  BoundingBox box;
};

std::vector<BoxRecord> parse_box_records(const json& doc, std::size_t frames) {
  if (!doc.contains("boxes") || !doc["boxes"].is_array()) {
    throw Error(ErrorCode::MalformedDocument, "missing 'boxes' array");
  }
  std::vector<BoxRecord> records;
  for (const json& rec : doc["boxes"]) {
    if (!rec.is_array() || rec.size() != 5) {
      throw Error(ErrorCode::MalformedDocument,
                  "box record must be [frame, x0, y0, x1, y1]");
    }
    for (const json& v : rec) {
      if (!v.is_number_integer()) {
        throw Error(ErrorCode::MalformedDocument,
                    "box record entries must be integers");
      }
    }
    const std::int64_t frame = rec[0].get<std::int64_t>();
    if (frame < 0 || static_cast<std::size_t>(frame) >= frames) {
      throw Error(ErrorCode::MalformedDocument,
                  "box record frame " + std::to_string(frame) +
                      " outside [0, " + std::to_string(frames) + ")");
    }
    BoundingBox box{rec[1].get<int>(), rec[2].get<int>(), rec[3].get<int>(),
                    rec[4].get<int>()};
    records.push_back({static_cast<std::size_t>(frame), box});
  }
  return records;
}

// Linear interpolation per corner between consecutive keyframes, corners
// rounded half-up. Frames outside the keyframe range hold the nearest box.
std::vector<BoundingBox> interpolate_keyframes(
    const std::vector<BoxRecord>& records, std::size_t frames) {
  std::map<std::size_t, BoundingBox> keyed;
  for (const BoxRecord& r : records) {
    if (keyed.count(r.frame)) {
      throw Error(ErrorCode::MalformedDocument,
                  "duplicate keyframe at frame " + std::to_string(r.frame));
    }
    keyed[r.frame] = r.box;
  }
  if (keyed.size() < 2) {
    throw Error(ErrorCode::MalformedDocument,
                "keyframes mode requires at least 2 keyframes");
  }
  std::vector<BoundingBox> boxes(frames);
  auto first = keyed.begin();
  auto last = std::prev(keyed.end());
  for (std::size_t t = 0; t < frames; ++t) {
    if (t <= first->first) {
      boxes[t] = first->second;
      continue;
    }
    if (t >= last->first) {
      boxes[t] = last->second;
      continue;
    }
    auto hi = keyed.upper_bound(t);
    auto lo = std::prev(hi);
    if (lo->first == t) {
      boxes[t] = lo->second;
      continue;
    }
    const double span = static_cast<double>(hi->first - lo->first);
    const double alpha = static_cast<double>(t - lo->first) / span;
    const BoundingBox& a = lo->second;
    const BoundingBox& b = hi->second;
    boxes[t] = BoundingBox{
        round_half_up(a.x0 + alpha * (b.x0 - a.x0)),
        round_half_up(a.y0 + alpha * (b.y0 - a.y0)),
        round_half_up(a.x1 + alpha * (b.x1 - a.x1)),
        round_half_up(a.y1 + alpha * (b.y1 - a.y1)),
    };
  }
  return boxes;
}

BoundingBox pixels_to_tokens(const BoundingBox& px, int divisor) {
  // Outward rounding: the token box always covers the pixel box.
  auto floor_div = [](int v, int d) {
    return static_cast<int>(std::floor(static_cast<double>(v) / d));
  };
  auto ceil_div = [](int v, int d) {
    return static_cast<int>(std::ceil(static_cast<double>(v) / d));
  };
  return BoundingBox{floor_div(px.x0, divisor), floor_div(px.y0, divisor),
                     ceil_div(px.x1, divisor), ceil_div(px.y1, divisor)};
}

}  // namespace

Trajectory parse_trajectory(const std::string& document_text) {
  json doc;
  try {
    doc = json::parse(document_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument,
                std::string("trajectory document is not valid JSON: ") +
                    e.what());
  }
  if (!doc.is_object()) {
    throw Error(ErrorCode::MalformedDocument,
                "trajectory document must be a JSON object");
  }

  static const std::vector<std::string> known = {"frames", "mode", "units",
                                                 "pixel_divisor", "boxes"};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw Error(ErrorCode::MalformedDocument,
                  "unknown field '" + it.key() + "'");
    }
  }

  if (!doc.contains("frames") || !doc["frames"].is_number_integer() ||
      doc["frames"].get<std::int64_t>() < 1) {
    throw Error(ErrorCode::MalformedDocument,
                "'frames' must be a positive integer");
  }
  const std::size_t frames = doc["frames"].get<std::size_t>();

  const std::string mode = doc.value("mode", std::string());
  if (mode != "perframe" && mode != "keyframes") {
    throw Error(ErrorCode::MalformedDocument,
                "'mode' must be 'perframe' or 'keyframes'");
  }

  const std::string units = doc.value("units", std::string("tokens"));
  if (units != "tokens" && units != "pixels") {
    throw Error(ErrorCode::MalformedDocument,
                "'units' must be 'tokens' or 'pixels'");
  }
  int divisor = 1;
  if (units == "pixels") {
    if (!doc.contains("pixel_divisor") ||
        !doc["pixel_divisor"].is_number_integer() ||
        doc["pixel_divisor"].get<std::int64_t>() < 1) {
      throw Error(ErrorCode::MalformedDocument,
                  "'pixel_divisor' (positive integer) is required when units "
                  "== 'pixels'");
    }
    divisor = doc["pixel_divisor"].get<int>();
  } else if (doc.contains("pixel_divisor")) {
    throw Error(ErrorCode::MalformedDocument,
                "'pixel_divisor' is only valid when units == 'pixels'");
  }

  std::vector<BoxRecord> records = parse_box_records(doc, frames);
  for (const BoxRecord& r : records) {
    check_box_positive(r.box, r.frame);
  }

  Trajectory traj;
  if (mode == "perframe") {
    if (records.size() != frames) {
      throw Error(ErrorCode::FrameCountMismatch,
                  "'perframe' mode needs exactly " + std::to_string(frames) +
                      " boxes, got " + std::to_string(records.size()));
    }
    traj.boxes.assign(frames, BoundingBox{});
    std::vector<bool> seen(frames, false);
    for (const BoxRecord& r : records) {
      if (seen[r.frame]) {
        throw Error(ErrorCode::MalformedDocument,
                    "duplicate box for frame " + std::to_string(r.frame));
      }
      seen[r.frame] = true;
      traj.boxes[r.frame] = r.box;
    }
  } else {
    traj.boxes = interpolate_keyframes(records, frames);
  }

  if (units == "pixels") {
    for (BoundingBox& b : traj.boxes) b = pixels_to_tokens(b, divisor);
  }

  traj.validate_shape_only();
  return traj;
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot read trajectory file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trajectory(buf.str());
}

TokenSet foreground_token_set(const Trajectory& traj,
                              const TokenLattice& lattice) {
  traj.validate(lattice);
  std::vector<std::uint32_t> members;
  for (std::size_t t = 0; t < lattice.frames; ++t) {
    const BoundingBox& b = traj.boxes[t];
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        members.push_back(static_cast<std::uint32_t>(
            lattice.flat_index(t, static_cast<std::size_t>(y),
                               static_cast<std::size_t>(x))));
      }
    }
  }
  return TokenSet(std::move(members));
}

std::size_t min_box_frame(const Trajectory& traj) {
  traj.validate_shape_only();
  std::size_t best = 0;
  for (std::size_t t = 1; t < traj.boxes.size(); ++t) {
    if (traj.boxes[t].area() < traj.boxes[best].area()) best = t;
  }
  return best;
}

}  // namespace trajctl

#include "trajctl/lattice.hpp"

#include <string>

namespace trajctl {

void LatentShape::validate() const {
  if (frames < 1 || patch < 1 || embed_dim < 1 || channels < 1) {
    throw Error(ErrorCode::ConfigError,
                "latent shape requires f >= 1, p >= 1, D >= 1, c >= 1");
  }
  if (batch != 1) {
    throw Error(ErrorCode::ConfigError, "batch is fixed to 1");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw Error(ErrorCode::NonDivisible,
                "latent height/width must be divisible by patch size (h=" +
                    std::to_string(height) + ", w=" + std::to_string(width) +
                    ", p=" + std::to_string(patch) + ")");
  }
  if (pixel_frames < frames || pixel_height < height || pixel_width < width) {
    throw Error(ErrorCode::ConfigError,
                "pixel dims must not be smaller than latent dims");
  }
}

std::size_t TokenLattice::flat_index(std::size_t t, std::size_t y,
                                     std::size_t x) const {
  if (t >= frames || y >= rows || x >= cols) {
    throw Error(ErrorCode::OutOfBounds,
                "token coordinate (" + std::to_string(t) + "," +
                    std::to_string(y) + "," + std::to_string(x) +
                    ") outside lattice " + std::to_string(frames) + "x" +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  return t * rows * cols + y * cols + x;
}

TokenLattice::Coords TokenLattice::coords(std::size_t position) const {
  if (position >= size()) {
    throw Error(ErrorCode::OutOfBounds,
                "flat position " + std::to_string(position) +
                    " outside sequence of length " + std::to_string(size()));
  }
  const std::size_t fs = frame_size();
  return Coords{position / fs, (position % fs) / cols, position % cols};
}

std::size_t TokenLattice::frame_begin(std::size_t t) const {
  if (t > frames) {
    throw Error(ErrorCode::OutOfBounds,
                "frame " + std::to_string(t) + " outside lattice");
  }
  return t * frame_size();
}

TokenLattice patchify(const LatentShape& shape) {
  shape.validate();
  return TokenLattice{shape.frames, shape.height / shape.patch,
                      shape.width / shape.patch};
}

}  // namespace trajctl

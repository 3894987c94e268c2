#pragma once

#include <cstddef>
#include <cstdint>

#include "trajctl/errors.hpp"

namespace trajctl {

// Latent-tensor bookkeeping. The VAE itself is out of scope; pixel dims are
// carried only so configs can state where a latent came from.
struct LatentShape {
  std::size_t frames = 1;        // f
  std::size_t channels = 16;     // c
  std::size_t height = 2;        // h, in latent pixels
  std::size_t width = 2;         // w, in latent pixels
  std::size_t patch = 2;         // p
  std::size_t pixel_frames = 1;  // F
  std::size_t pixel_height = 2;  // H
  std::size_t pixel_width = 2;   // W
  std::size_t embed_dim = 64;    // D
  std::size_t batch = 1;         // fixed to 1 in this artifact

  void validate() const;
};

// Token grid produced by patchification, flattened frame-outermost,
// column-innermost. All index conversions live here.
struct TokenLattice {
  std::size_t frames = 1;  // f
  std::size_t rows = 1;    // h' = h/p
  std::size_t cols = 1;    // w' = w/p

  std::size_t size() const { return frames * rows * cols; }
  std::size_t frame_size() const { return rows * cols; }

  std::size_t flat_index(std::size_t t, std::size_t y, std::size_t x) const;

  struct Coords {
    std::size_t t, y, x;
    bool operator==(const Coords&) const = default;
  };
  Coords coords(std::size_t position) const;

  // Positions of frame t occupy [frame_begin(t), frame_begin(t+1)).
  std::size_t frame_begin(std::size_t t) const;

  bool operator==(const TokenLattice&) const = default;
};

TokenLattice patchify(const LatentShape& shape);

}  // namespace trajctl

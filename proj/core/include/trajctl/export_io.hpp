#pragma once

#include <string>

#include "trajctl/masking.hpp"
#include "trajctl/matrix.hpp"
#include "trajctl/rope.hpp"

namespace trajctl {

// Writes content to a sibling temp file and renames it over the target, so
// an interrupted run never leaves a partial artifact. Throws IoError.
void write_text_file(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);  // throws IoError

// Cells formatted with "%.17g" so doubles round-trip exactly.
std::string matrix_to_csv(const Mat& m);

// Plain (P2) graymap: values mapped linearly with min -> 0 and max -> 255;
// a constant matrix maps to all zeros.
std::string matrix_to_pgm(const Mat& m);

// 0 = pass, 1 = blocked.
std::string mask_to_csv(const AttentionMask& mask);

// Plain (P2) graymap with maxval 1; 1 = blocked.
std::string mask_to_pgm(const AttentionMask& mask);

// One line per token: flat index, lattice coordinates, and the (possibly
// transformed) rotary coordinates.
std::string rope_coords_to_csv(const RopeTable& table);

// JSON forms of the same artifacts, serialized deterministically.
std::string matrix_to_json(const Mat& m);
std::string mask_to_json(const AttentionMask& mask);
std::string rope_coords_to_json(const RopeTable& table);

}  // namespace trajctl

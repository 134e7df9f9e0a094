#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sloth/tensor.hpp"

namespace sloth {

// h x w grid of d-dimensional feature vectors; row i of features is grid
// cell (i / w, i % w).
struct VisualGrid {
  int h = 0;
  int w = 0;
  int d = 0;
  Tensor features;  // [(h*w) x d]
};

// Four quadrants plus a pooled thumbnail, all h x w x d.
struct HdTileSet {
  std::array<VisualGrid, 4> tiles;  // top-left, top-right, bottom-left, bottom-right
  VisualGrid thumbnail;
};

// Deterministic stand-in for a frozen vision encoder: gaussian cells from the
// seeded stream, then one pass of a 3x3 box filter (mean over in-grid
// neighbors) so adjacent cells share information.
VisualGrid synth_features(std::uint64_t seed, int h, int w, int d);

// Splits a 2h x 2w grid into quadrants and a 2x2 average-pooled thumbnail.
HdTileSet hd_tile(const VisualGrid& full);

// Byte-level toy tokenizer. ids 0-255 are raw bytes; 256 is reserved (the
// live dot id is byte 46, which doubles as the query-init embedding row);
// 257 terminates an answer.
constexpr int kDotToken = 46;
constexpr int kReservedDotAlias = 256;
constexpr int kEndOfAnswer = 257;
constexpr int kMinVocab = 258;

std::vector<int> toy_tokenize(std::string_view text, int vocab_size);
std::string toy_detokenize(const std::vector<int>& ids);

// Flat binary format: magic "VGRD", u32 h, w, d, then little-endian f64
// features in row-major order.
void save_vgrd(const std::string& path, const VisualGrid& grid);
VisualGrid load_vgrd(const std::string& path);

}  // namespace sloth

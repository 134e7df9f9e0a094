#pragma once

#include <string>
#include <vector>

#include "sloth/tensor.hpp"
#include "sloth/vision.hpp"

namespace sloth {

// Spatial attention pooling: each s x s region is collapsed to one token,
// weighted by a per-token score from a two-layer MLP (gelu hidden layer,
// scalar logit head), softmax-normalized within the region.
struct SapParams {
  Tensor w1;  // [d x d_hidden]
  Tensor b1;  // [d_hidden]
  Tensor w2;  // [d_hidden x 1]
  Tensor b2;  // [1]
  int s = 3;

  static SapParams init(int d, int d_hidden, int s, Rng& rng);
  std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
};

// Row indices of each region's tokens; regions ordered row-major over region
// coordinates, tokens row-major within the region.
std::vector<std::vector<int>> region_index_blocks(int h, int w, int s);

// Differentiable region blocks F_v^i, each [s^2 x d].
std::vector<Tensor> partition_regions(const VisualGrid& grid, int s);

// Softmax attention weights for one region block, shape [s^2].
Tensor region_weights(const Tensor& block, const SapParams& params);

// Full compressor: (h/s) x (w/s) grid of weighted region combinations.
VisualGrid sap_forward(const VisualGrid& grid, const SapParams& params);

enum class CompressorKind { kSap, kAvgPool, kPixelShuffle, kLdp };

CompressorKind compressor_kind_from(const std::string& name);
std::string to_string(CompressorKind kind);

// One visual compressor instance. kind selects which parameter set is live:
//   sap           - SapParams above
//   avg_pool      - parameter-free regional mean
//   pixel_shuffle - channel-concat of the s^2 region tokens, then a linear
//                   map back to d
//   ldp           - depthwise 3x3 conv (zero padding, stride s) followed by
//                   a pointwise linear map
struct Compressor {
  CompressorKind kind = CompressorKind::kSap;
  int s = 3;
  SapParams sap;
  Tensor shuffle_proj;   // [(s^2*d) x d]
  Tensor ldp_depthwise;  // [d x 9], per-channel 3x3 taps in row-major order
  Tensor ldp_pointwise;  // [d x d]

  static Compressor make(CompressorKind kind, int d, int d_hidden, int s, Rng& rng);
  VisualGrid forward(const VisualGrid& grid) const;
  std::vector<Tensor> parameters() const;
};

// Spec-level entry point for the non-SAP compressors.
VisualGrid baseline_compress(const VisualGrid& grid, CompressorKind kind, int s,
                             const Compressor& params);

}  // namespace sloth

#include "sloth/sap.hpp"

namespace sloth {

SapParams SapParams::init(int d, int d_hidden, int s, Rng& rng) {
  if (d < 1 || d_hidden < 1 || s < 1)
    throw ContractError("SapParams::init: d, d_hidden and s must be positive");
  SapParams p;
  p.s = s;
  p.w1 = Tensor::param_gaussian({d, d_hidden}, 0.02, rng);
  p.b1 = Tensor::param({d_hidden}, std::vector<double>(static_cast<std::size_t>(d_hidden), 0.0));
  p.w2 = Tensor::param_gaussian({d_hidden, 1}, 0.02, rng);
  p.b2 = Tensor::param({1}, {0.0});
  return p;
}

static void check_divisible(const VisualGrid& grid, int s, const char* who) {
  if (s < 1) throw ContractError(std::string(who) + ": region side must be positive");
  if (grid.h % s != 0 || grid.w % s != 0)
    throw ShapeError(std::string(who) + ": grid " + std::to_string(grid.h) + "x" +
                     std::to_string(grid.w) + " not divisible by s=" + std::to_string(s) +
                     " (no padding)");
}

std::vector<std::vector<int>> region_index_blocks(int h, int w, int s) {
  std::vector<std::vector<int>> blocks;
  blocks.reserve(static_cast<std::size_t>(h / s) * (w / s));
  for (int ri = 0; ri < h / s; ++ri)
    for (int rj = 0; rj < w / s; ++rj) {
      std::vector<int> idx;
      idx.reserve(static_cast<std::size_t>(s) * s);
      for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b) idx.push_back((ri * s + a) * w + rj * s + b);
      blocks.push_back(std::move(idx));
    }
  return blocks;
}

std::vector<Tensor> partition_regions(const VisualGrid& grid, int s) {
  check_divisible(grid, s, "partition_regions");
  std::vector<Tensor> out;
  for (const auto& idx : region_index_blocks(grid.h, grid.w, s))
    out.push_back(gather_rows(grid.features, idx));
  return out;
}

// [1 x s^2] row of softmax(mlp(block)) logits
static Tensor region_alpha_row(const Tensor& block, const SapParams& params) {
  if (block.cols() != params.w1.dim(0))
    throw ShapeError("region_weights: block width " + shape_str(block.shape()) +
                     " vs mlp input " + shape_str(params.w1.shape()));
  Tensor hidden = gelu(add_rowvec(matmul(block, params.w1), params.b1));
  Tensor logits = add_rowvec(matmul(hidden, params.w2), params.b2);  // [s^2 x 1]
  return softmax_rows(transpose(logits));
}

Tensor region_weights(const Tensor& block, const SapParams& params) {
  Tensor alpha = region_alpha_row(block, params);
  return reshape(alpha, {alpha.dim(1)});
}

VisualGrid sap_forward(const VisualGrid& grid, const SapParams& params) {
  check_divisible(grid, params.s, "sap_forward");
  std::vector<Tensor> pooled;
  for (const auto& idx : region_index_blocks(grid.h, grid.w, params.s)) {
    Tensor block = gather_rows(grid.features, idx);
    pooled.push_back(matmul(region_alpha_row(block, params), block));
  }
  return {grid.h / params.s, grid.w / params.s, grid.d, concat_rows(pooled)};
}

CompressorKind compressor_kind_from(const std::string& name) {
  if (name == "sap") return CompressorKind::kSap;
  if (name == "avg_pool") return CompressorKind::kAvgPool;
  if (name == "pixel_shuffle") return CompressorKind::kPixelShuffle;
  if (name == "ldp") return CompressorKind::kLdp;
  throw ConfigError("unknown compressor kind: " + name);
}

std::string to_string(CompressorKind kind) {
  switch (kind) {
    case CompressorKind::kSap: return "sap";
    case CompressorKind::kAvgPool: return "avg_pool";
    case CompressorKind::kPixelShuffle: return "pixel_shuffle";
    case CompressorKind::kLdp: return "ldp";
  }
  return "?";
}

Compressor Compressor::make(CompressorKind kind, int d, int d_hidden, int s, Rng& rng) {
  Compressor c;
  c.kind = kind;
  c.s = s;
  switch (kind) {
    case CompressorKind::kSap:
      c.sap = SapParams::init(d, d_hidden, s, rng);
      break;
    case CompressorKind::kAvgPool:
      break;
    case CompressorKind::kPixelShuffle:
      c.shuffle_proj = Tensor::param_gaussian({s * s * d, d}, 0.02, rng);
      break;
    case CompressorKind::kLdp: {
      // start from a delta-centered depthwise kernel and identity pointwise,
      // so the untrained compressor is near a strided sampler
      std::vector<double> dw(static_cast<std::size_t>(d) * 9, 0.0);
      for (int ch = 0; ch < d; ++ch) dw[static_cast<std::size_t>(ch) * 9 + 4] = 1.0;
      c.ldp_depthwise = Tensor::param({d, 9}, std::move(dw));
      std::vector<double> pw(static_cast<std::size_t>(d) * d, 0.0);
      for (int ch = 0; ch < d; ++ch) pw[static_cast<std::size_t>(ch) * d + ch] = 1.0;
      c.ldp_pointwise = Tensor::param({d, d}, std::move(pw));
      break;
    }
  }
  return c;
}

std::vector<Tensor> Compressor::parameters() const {
  switch (kind) {
    case CompressorKind::kSap: return sap.parameters();
    case CompressorKind::kAvgPool: return {};
    case CompressorKind::kPixelShuffle: return {shuffle_proj};
    case CompressorKind::kLdp: return {ldp_depthwise, ldp_pointwise};
  }
  return {};
}

static VisualGrid avg_pool_forward(const VisualGrid& grid, int s) {
  check_divisible(grid, s, "avg_pool");
  Tensor mean_row = Tensor::matrix(1, s * s, std::vector<double>(static_cast<std::size_t>(s) * s,
                                                                 1.0 / (s * s)));
  std::vector<Tensor> pooled;
  for (const auto& idx : region_index_blocks(grid.h, grid.w, s))
    pooled.push_back(matmul(mean_row, gather_rows(grid.features, idx)));
  return {grid.h / s, grid.w / s, grid.d, concat_rows(pooled)};
}

static VisualGrid pixel_shuffle_forward(const VisualGrid& grid, int s, const Tensor& proj) {
  check_divisible(grid, s, "pixel_shuffle");
  if (proj.dim(0) != s * s * grid.d || proj.dim(1) != grid.d)
    throw ShapeError("pixel_shuffle: projection " + shape_str(proj.shape()) + " for s=" +
                     std::to_string(s) + ", d=" + std::to_string(grid.d));
  std::vector<Tensor> stacked;
  for (const auto& idx : region_index_blocks(grid.h, grid.w, s))
    stacked.push_back(reshape(gather_rows(grid.features, idx), {1, s * s * grid.d}));
  return {grid.h / s, grid.w / s, grid.d, matmul(concat_rows(stacked), proj)};
}

static VisualGrid ldp_forward(const VisualGrid& grid, int s, const Tensor& depthwise,
                              const Tensor& pointwise) {
  check_divisible(grid, s, "ldp");
  if (depthwise.dim(0) != grid.d || depthwise.dim(1) != 9 || pointwise.dim(0) != grid.d ||
      pointwise.dim(1) != grid.d)
    throw ShapeError("ldp: kernels " + shape_str(depthwise.shape()) + "/" +
                     shape_str(pointwise.shape()) + " for d=" + std::to_string(grid.d));
  const int oh = grid.h / s, ow = grid.w / s;
  const int center = (s - 1) / 2;
  const int zero_row = grid.h * grid.w;  // appended all-zero row stands in for padding
  Tensor padded = concat_rows({grid.features, Tensor::zeros({1, grid.d})});

  Tensor acc;
  int tap = 0;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj, ++tap) {
      std::vector<int> idx(static_cast<std::size_t>(oh) * ow);
      for (int oi = 0; oi < oh; ++oi)
        for (int oj = 0; oj < ow; ++oj) {
          const int ci = oi * s + center + di, cj = oj * s + center + dj;
          const bool inside = ci >= 0 && ci < grid.h && cj >= 0 && cj < grid.w;
          idx[static_cast<std::size_t>(oi) * ow + oj] = inside ? ci * grid.w + cj : zero_row;
        }
      Tensor taps = reshape(slice_cols(depthwise, tap, tap + 1), {grid.d});
      Tensor term = mul_rowvec(gather_rows(padded, idx), taps);
      acc = tap == 0 ? term : add(acc, term);
    }
  return {oh, ow, grid.d, matmul(acc, pointwise)};
}

VisualGrid Compressor::forward(const VisualGrid& grid) const {
  switch (kind) {
    case CompressorKind::kSap: return sap_forward(grid, sap);
    case CompressorKind::kAvgPool: return avg_pool_forward(grid, s);
    case CompressorKind::kPixelShuffle: return pixel_shuffle_forward(grid, s, shuffle_proj);
    case CompressorKind::kLdp: return ldp_forward(grid, s, ldp_depthwise, ldp_pointwise);
  }
  throw ContractError("Compressor::forward: bad kind");
}

VisualGrid baseline_compress(const VisualGrid& grid, CompressorKind kind, int s,
                             const Compressor& params) {
  switch (kind) {
    case CompressorKind::kSap: return sap_forward(grid, params.sap);
    case CompressorKind::kAvgPool: return avg_pool_forward(grid, s);
    case CompressorKind::kPixelShuffle: return pixel_shuffle_forward(grid, s, params.shuffle_proj);
    case CompressorKind::kLdp:
      return ldp_forward(grid, s, params.ldp_depthwise, params.ldp_pointwise);
  }
  throw ContractError("baseline_compress: bad kind");
}

}  // namespace sloth

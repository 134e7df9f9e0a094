#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sloth/embq.hpp"
#include "sloth/sap.hpp"
#include "sloth/tensor.hpp"
#include "sloth/vision.hpp"

namespace sloth {

struct ModelConfig {
  int n_layers = 12;
  int d_model = 256;
  int n_heads = 4;
  int d_ff = 1024;
  int vocab_size = kMinVocab;
  int d_vis = 64;
  int grid_h = 27;
  int grid_w = 27;
  int s = 3;             // compressor downsampling rate
  int sap_hidden = 0;    // 0 means d_vis
  int n_queries = 9;
  std::vector<int> embq_insertion = {8};  // 1-based block indices, hook runs after the block
  int embq_dim = 576;
  int embq_n_layers = 1;
  FusionMode fusion = FusionMode::kAdd;
  CompressorKind compressor = CompressorKind::kSap;
  QueryInit query_init = QueryInit::kDot;
  bool hd = false;
  bool hd_embq_all_tiles = true;  // hook keys: all raw tile tokens vs thumbnail only
  int max_seq = 4096;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / n_heads; }
  int sap_hidden_dim() const { return sap_hidden > 0 ? sap_hidden : d_vis; }
  void validate() const;
};

enum class Segment { kVisual, kText, kQuery, kAnswer };

struct SeqItem {
  Segment seg;
  int id = -1;   // vocab id (text/answer)
  int row = -1;  // row into visual_proj or query embeddings
  int turn = 0;
};

// Token layout visual | text | query | answer, repeated per turn after the
// shared visual prefix. Positions are sequential across segments.
struct MixedSequence {
  Tensor visual_proj;  // [Nv x d_model]
  Tensor visual_raw;   // [Nraw x d_vis], EmbQ hook keys
  std::vector<SeqItem> items;
  int n_turns = 0;

  int length() const { return static_cast<int>(items.size()); }
  std::vector<int> positions_of(Segment seg, int turn = -1) const;
  int visual_count() const;
  int query_count() const;
};

struct TurnInput {
  std::vector<int> text_ids;
  std::vector<int> answer_ids;  // empty for a prompt awaiting decode
};

MixedSequence build_sequence(const Tensor& visual_proj, const Tensor& visual_raw,
                             const std::vector<int>& text_ids, int n_queries,
                             const std::vector<int>& answer_ids = {});
MixedSequence build_sequence_multi(const Tensor& visual_proj, const Tensor& visual_raw,
                                   const std::vector<TurnInput>& turns, int n_queries);

struct BlockParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct ModelParams {
  ModelConfig config;
  Tensor tok_embedding;  // [vocab x d_model]
  std::vector<BlockParams> blocks;
  Tensor final_ln_g, final_ln_b;
  Tensor lm_head;   // [d_model x vocab], untied, no bias
  Tensor projector;  // [d_vis x d_model]
  Compressor compressor;
  QuerySet queries;               // n == 0 disables the query segment
  std::vector<EmbQParams> embq;   // one per insertion site; empty when n_queries == 0

  static ModelParams init(const ModelConfig& config);
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Linear map of compressed visual tokens into model space.
Tensor project_visual(const VisualGrid& fv_s, const Tensor& proj);

struct VisualEncoding {
  Tensor projected;  // [Nv x d_model]
  Tensor raw;        // [Nraw x d_vis]
};

// compressor + projector; with config.hd the grid is split into 4 tiles and
// a thumbnail first, each compressed with the shared compressor.
VisualEncoding encode_visual(const VisualGrid& grid, const ModelParams& params);

MixedSequence make_prompt(const ModelParams& params, const VisualGrid& grid,
                          const std::vector<int>& text_ids,
                          const std::vector<int>& answer_ids = {});

// Per-layer, per-head attention cache (post-rotation keys).
struct DecodeState {
  std::vector<std::vector<Tensor>> k_cache;  // [layer][head] -> [ctx x d_head]
  std::vector<std::vector<Tensor>> v_cache;
  int length = 0;
};

// Causal transformer forward over the mixed sequence; logits for every
// position. When `cache` is given it is filled with this call's keys/values.
Tensor forward(const MixedSequence& seq, const ModelParams& params, DecodeState* cache = nullptr);

// Greedy continuation using the incremental cache path. Stops at the
// end-of-answer id (not included in the result) or after max_new tokens.
std::vector<int> decode_greedy(const MixedSequence& prompt, const ModelParams& params, int max_new);

// Checkpoint: magic "SLTH", textual key=value config block, then named
// tensors as u32 name length, name, u32 rank, u32 dims, little-endian f64.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace sloth

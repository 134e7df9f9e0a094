#pragma once

#include <string>
#include <vector>

#include "sloth/tensor.hpp"

namespace sloth {

enum class FusionMode { kAdd, kReplace, kGate };
enum class QueryInit { kDot, kRandom, kFixedDot };

FusionMode fusion_from(const std::string& name);
std::string to_string(FusionMode mode);
QueryInit query_init_from(const std::string& name);
std::string to_string(QueryInit mode);

struct CrossAttnParams {
  Tensor wq;
  Tensor wk;
  Tensor wv;
};

// One embedded-query stage: single-head cross-attention from query states to
// text states, then from the text-conditioned queries to the raw visual
// tokens, then a single up-projection back into model space. No biases.
struct EmbQStage {
  CrossAttnParams text_attn;  // d_model -> d_e on all three projections
  CrossAttnParams vis_attn;   // wq: d_e -> d_e, wk/wv: d_vis -> d_e
  Tensor up_proj;             // [d_e x d_model]
  Tensor gate_logits;         // [d_model], live in gate fusion only
};

struct EmbQParams {
  int d_e = 576;
  int n_layers = 1;
  FusionMode fusion = FusionMode::kAdd;
  std::vector<EmbQStage> stages;  // fresh parameters per repeat

  static EmbQParams init(int d_model, int d_vis, int d_e, int n_layers, FusionMode fusion,
                         Rng& rng);
  std::vector<Tensor> parameters() const;
};

// Learnable query tokens appended after the text segment. n = 0 disables the
// module entirely.
struct QuerySet {
  int n = 0;
  Tensor embeddings;  // [n x d_model]
  QueryInit init_mode = QueryInit::kDot;
};

QuerySet init_queries(int n, const Tensor& embedding_table, QueryInit mode, Rng& rng);

// Cross-attention of query states over text states only (visual tokens are
// not in the key/value set by construction). Scaled by sqrt(d_e).
Tensor text_query(const Tensor& fq_k, const Tensor& ft_k, const CrossAttnParams& params);

// Cross-attention of text-conditioned queries over the raw (pre-compression)
// visual tokens.
Tensor visual_query(const Tensor& ftq, const Tensor& fv_raw, const CrossAttnParams& params);

// Runs the text->visual query chain n_layers times, fusing each stage's
// up-projected output into the query states per the fusion mode.
Tensor embq_apply(const Tensor& fq_k, const Tensor& ft_k, const Tensor& fv_raw,
                  const EmbQParams& params);

}  // namespace sloth

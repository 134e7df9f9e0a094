#include "sloth/embq.hpp"

#include <cmath>

#include "sloth/vision.hpp"

namespace sloth {

FusionMode fusion_from(const std::string& name) {
  if (name == "add") return FusionMode::kAdd;
  if (name == "replace") return FusionMode::kReplace;
  if (name == "gate") return FusionMode::kGate;
  throw ConfigError("unknown fusion mode: " + name);
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kAdd: return "add";
    case FusionMode::kReplace: return "replace";
    case FusionMode::kGate: return "gate";
  }
  return "?";
}

QueryInit query_init_from(const std::string& name) {
  if (name == "dot") return QueryInit::kDot;
  if (name == "random") return QueryInit::kRandom;
  if (name == "fixed_dot") return QueryInit::kFixedDot;
  throw ConfigError("unknown query init mode: " + name);
}

std::string to_string(QueryInit mode) {
  switch (mode) {
    case QueryInit::kDot: return "dot";
    case QueryInit::kRandom: return "random";
    case QueryInit::kFixedDot: return "fixed_dot";
  }
  return "?";
}

EmbQParams EmbQParams::init(int d_model, int d_vis, int d_e, int n_layers, FusionMode fusion,
                            Rng& rng) {
  if (d_model < 1 || d_vis < 1 || d_e < 1 || n_layers < 1)
    throw ContractError("EmbQParams::init: dimensions and layer count must be positive");
  EmbQParams p;
  p.d_e = d_e;
  p.n_layers = n_layers;
  p.fusion = fusion;
  for (int l = 0; l < n_layers; ++l) {
    EmbQStage st;
    st.text_attn.wq = Tensor::param_gaussian({d_model, d_e}, 0.02, rng);
    st.text_attn.wk = Tensor::param_gaussian({d_model, d_e}, 0.02, rng);
    st.text_attn.wv = Tensor::param_gaussian({d_model, d_e}, 0.02, rng);
    st.vis_attn.wq = Tensor::param_gaussian({d_e, d_e}, 0.02, rng);
    st.vis_attn.wk = Tensor::param_gaussian({d_vis, d_e}, 0.02, rng);
    st.vis_attn.wv = Tensor::param_gaussian({d_vis, d_e}, 0.02, rng);
    st.up_proj = Tensor::param_gaussian({d_e, d_model}, 0.02, rng);
    if (fusion == FusionMode::kGate)
      st.gate_logits =
          Tensor::param({d_model}, std::vector<double>(static_cast<std::size_t>(d_model), 0.0));
    p.stages.push_back(std::move(st));
  }
  return p;
}

std::vector<Tensor> EmbQParams::parameters() const {
  std::vector<Tensor> out;
  for (const auto& st : stages) {
    out.push_back(st.text_attn.wq);
    out.push_back(st.text_attn.wk);
    out.push_back(st.text_attn.wv);
    out.push_back(st.vis_attn.wq);
    out.push_back(st.vis_attn.wk);
    out.push_back(st.vis_attn.wv);
    out.push_back(st.up_proj);
    if (st.gate_logits.defined()) out.push_back(st.gate_logits);
  }
  return out;
}

QuerySet init_queries(int n, const Tensor& embedding_table, QueryInit mode, Rng& rng) {
  if (n < 0) throw ContractError("init_queries: negative query count " + std::to_string(n));
  const int d_model = embedding_table.cols();
  if (embedding_table.rows() <= kDotToken)
    throw ContractError("init_queries: embedding table has no dot-token row");
  QuerySet q;
  q.n = n;
  q.init_mode = mode;
  std::vector<double> data(static_cast<std::size_t>(n) * d_model);
  if (mode == QueryInit::kRandom) {
    for (auto& v : data) v = rng.gaussian(0.0, 0.02);
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d_model; ++j)
        data[static_cast<std::size_t>(i) * d_model + j] = embedding_table(kDotToken, j);
  }
  q.embeddings = Tensor::param({n, d_model}, std::move(data));
  return q;
}

static Tensor cross_attention(const Tensor& queries, const Tensor& keys_src,
                              const CrossAttnParams& params) {
  Tensor q = matmul(queries, params.wq);
  Tensor k = matmul(keys_src, params.wk);
  Tensor v = matmul(keys_src, params.wv);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_scale));
  return matmul(weights, v);
}

Tensor text_query(const Tensor& fq_k, const Tensor& ft_k, const CrossAttnParams& params) {
  if (!ft_k.defined() || ft_k.rank() != 2 || ft_k.rows() == 0)
    throw ContractError("text_query: empty text segment (the module needs an instruction)");
  return cross_attention(fq_k, ft_k, params);
}

Tensor visual_query(const Tensor& ftq, const Tensor& fv_raw, const CrossAttnParams& params) {
  if (!fv_raw.defined() || fv_raw.rank() != 2 || fv_raw.rows() == 0)
    throw ContractError("visual_query: no visual tokens to attend");
  return cross_attention(ftq, fv_raw, params);
}

Tensor embq_apply(const Tensor& fq_k, const Tensor& ft_k, const Tensor& fv_raw,
                  const EmbQParams& params) {
  if (fq_k.rows() < 1) throw ContractError("embq_apply: no query rows (n = 0 is handled upstream)");
  Tensor fq = fq_k;
  for (const auto& st : params.stages) {
    Tensor delta = matmul(visual_query(text_query(fq, ft_k, st.text_attn), fv_raw, st.vis_attn),
                          st.up_proj);
    switch (params.fusion) {
      case FusionMode::kAdd:
        fq = add(fq, delta);
        break;
      case FusionMode::kReplace:
        fq = delta;
        break;
      case FusionMode::kGate: {
        Tensor gate = sigmoid(st.gate_logits);
        fq = add(fq, mul_rowvec(delta, gate));
        break;
      }
    }
  }
  return fq;
}

}  // namespace sloth

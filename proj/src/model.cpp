#include "sloth/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace sloth {

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1)
    throw ConfigError("model dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  if (head_dim() % 2 != 0)
    throw ConfigError("head dim " + std::to_string(head_dim()) + " must be even for rotary encoding");
  if (vocab_size < kMinVocab)
    throw ConfigError("vocab_size must be at least " + std::to_string(kMinVocab));
  if (n_queries < 0) throw ConfigError("n_queries must be non-negative");
  if (embq_insertion.empty()) throw ConfigError("at least one insertion layer required");
  for (int k : embq_insertion)
    if (k < 1 || k > n_layers)
      throw ConfigError("embq insertion layer " + std::to_string(k) + " outside 1.." +
                        std::to_string(n_layers));
  if (embq_dim < 1 || embq_n_layers < 1) throw ConfigError("embq dimensions must be positive");
  if (s < 1) throw ConfigError("downsampling rate must be positive");
  if (max_seq < 1) throw ConfigError("max_seq must be positive");
}

std::vector<int> MixedSequence::positions_of(Segment seg, int turn) const {
  std::vector<int> out;
  for (int i = 0; i < length(); ++i)
    if (items[static_cast<std::size_t>(i)].seg == seg &&
        (turn < 0 || items[static_cast<std::size_t>(i)].turn == turn))
      out.push_back(i);
  return out;
}

int MixedSequence::visual_count() const {
  return static_cast<int>(positions_of(Segment::kVisual).size());
}

int MixedSequence::query_count() const {
  return static_cast<int>(positions_of(Segment::kQuery).size());
}

MixedSequence build_sequence_multi(const Tensor& visual_proj, const Tensor& visual_raw,
                                   const std::vector<TurnInput>& turns, int n_queries) {
  MixedSequence seq;
  seq.visual_proj = visual_proj;
  seq.visual_raw = visual_raw;
  seq.n_turns = static_cast<int>(turns.size());
  const int nv = visual_proj.defined() ? visual_proj.rows() : 0;
  for (int r = 0; r < nv; ++r) seq.items.push_back({Segment::kVisual, -1, r, 0});
  for (int t = 0; t < seq.n_turns; ++t) {
    const auto& turn = turns[static_cast<std::size_t>(t)];
    for (int id : turn.text_ids) seq.items.push_back({Segment::kText, id, -1, t});
    for (int r = 0; r < n_queries; ++r) seq.items.push_back({Segment::kQuery, -1, r, t});
    for (int id : turn.answer_ids) seq.items.push_back({Segment::kAnswer, id, -1, t});
  }
  return seq;
}

MixedSequence build_sequence(const Tensor& visual_proj, const Tensor& visual_raw,
                             const std::vector<int>& text_ids, int n_queries,
                             const std::vector<int>& answer_ids) {
  return build_sequence_multi(visual_proj, visual_raw, {{text_ids, answer_ids}}, n_queries);
}

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  Rng rng(mix_seed(config.seed, 0x534c4f5448ULL));  // "SLOTH"

  const int d = config.d_model;
  auto ones = [](int n) { return Tensor::param({n}, std::vector<double>(static_cast<std::size_t>(n), 1.0)); };
  auto zeros1 = [](int n) { return Tensor::param({n}, std::vector<double>(static_cast<std::size_t>(n), 0.0)); };

  p.tok_embedding = Tensor::param_gaussian({config.vocab_size, d}, 0.02, rng);
  for (int l = 0; l < config.n_layers; ++l) {
    BlockParams b;
    b.ln1_g = ones(d);
    b.ln1_b = zeros1(d);
    b.wq = Tensor::param_gaussian({d, d}, 0.02, rng);
    b.bq = zeros1(d);
    b.wk = Tensor::param_gaussian({d, d}, 0.02, rng);
    b.bk = zeros1(d);
    b.wv = Tensor::param_gaussian({d, d}, 0.02, rng);
    b.bv = zeros1(d);
    b.wo = Tensor::param_gaussian({d, d}, 0.02, rng);
    b.bo = zeros1(d);
    b.ln2_g = ones(d);
    b.ln2_b = zeros1(d);
    b.ff_w1 = Tensor::param_gaussian({d, config.d_ff}, 0.02, rng);
    b.ff_b1 = zeros1(config.d_ff);
    b.ff_w2 = Tensor::param_gaussian({config.d_ff, d}, 0.02, rng);
    b.ff_b2 = zeros1(d);
    p.blocks.push_back(std::move(b));
  }
  p.final_ln_g = ones(d);
  p.final_ln_b = zeros1(d);
  p.lm_head = Tensor::param_gaussian({d, config.vocab_size}, 0.02, rng);
  p.projector = Tensor::param_gaussian({config.d_vis, d}, 0.02, rng);
  p.compressor =
      Compressor::make(config.compressor, config.d_vis, config.sap_hidden_dim(), config.s, rng);
  if (config.n_queries > 0) {
    p.queries = init_queries(config.n_queries, p.tok_embedding, config.query_init, rng);
    for (std::size_t i = 0; i < config.embq_insertion.size(); ++i)
      p.embq.push_back(EmbQParams::init(d, config.d_vis, config.embq_dim, config.embq_n_layers,
                                        config.fusion, rng));
  } else {
    p.queries = QuerySet{};
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_embedding", tok_embedding);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1_g", b.ln1_g);
    out.emplace_back(pre + "ln1_b", b.ln1_b);
    out.emplace_back(pre + "wq", b.wq);
    out.emplace_back(pre + "bq", b.bq);
    out.emplace_back(pre + "wk", b.wk);
    out.emplace_back(pre + "bk", b.bk);
    out.emplace_back(pre + "wv", b.wv);
    out.emplace_back(pre + "bv", b.bv);
    out.emplace_back(pre + "wo", b.wo);
    out.emplace_back(pre + "bo", b.bo);
    out.emplace_back(pre + "ln2_g", b.ln2_g);
    out.emplace_back(pre + "ln2_b", b.ln2_b);
    out.emplace_back(pre + "ff_w1", b.ff_w1);
    out.emplace_back(pre + "ff_b1", b.ff_b1);
    out.emplace_back(pre + "ff_w2", b.ff_w2);
    out.emplace_back(pre + "ff_b2", b.ff_b2);
  }
  out.emplace_back("final_ln_g", final_ln_g);
  out.emplace_back("final_ln_b", final_ln_b);
  out.emplace_back("lm_head", lm_head);
  out.emplace_back("projector", projector);
  switch (compressor.kind) {
    case CompressorKind::kSap:
      out.emplace_back("compressor.sap.w1", compressor.sap.w1);
      out.emplace_back("compressor.sap.b1", compressor.sap.b1);
      out.emplace_back("compressor.sap.w2", compressor.sap.w2);
      out.emplace_back("compressor.sap.b2", compressor.sap.b2);
      break;
    case CompressorKind::kAvgPool:
      break;
    case CompressorKind::kPixelShuffle:
      out.emplace_back("compressor.shuffle_proj", compressor.shuffle_proj);
      break;
    case CompressorKind::kLdp:
      out.emplace_back("compressor.ldp_depthwise", compressor.ldp_depthwise);
      out.emplace_back("compressor.ldp_pointwise", compressor.ldp_pointwise);
      break;
  }
  if (queries.n > 0) out.emplace_back("queries", queries.embeddings);
  for (std::size_t site = 0; site < embq.size(); ++site) {
    for (std::size_t st = 0; st < embq[site].stages.size(); ++st) {
      const auto& stage = embq[site].stages[st];
      const std::string pre =
          "embq." + std::to_string(site) + "." + std::to_string(st) + ".";
      out.emplace_back(pre + "text_wq", stage.text_attn.wq);
      out.emplace_back(pre + "text_wk", stage.text_attn.wk);
      out.emplace_back(pre + "text_wv", stage.text_attn.wv);
      out.emplace_back(pre + "vis_wq", stage.vis_attn.wq);
      out.emplace_back(pre + "vis_wk", stage.vis_attn.wk);
      out.emplace_back(pre + "vis_wv", stage.vis_attn.wv);
      out.emplace_back(pre + "up_proj", stage.up_proj);
      if (stage.gate_logits.defined()) out.emplace_back(pre + "gate_logits", stage.gate_logits);
    }
  }
  return out;
}

Tensor project_visual(const VisualGrid& fv_s, const Tensor& proj) {
  if (proj.rank() != 2 || proj.dim(0) != fv_s.d)
    throw ShapeError("project_visual: grid dim " + std::to_string(fv_s.d) + " vs projection " +
                     shape_str(proj.shape()));
  return matmul(fv_s.features, proj);
}

VisualEncoding encode_visual(const VisualGrid& grid, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  if (!cfg.hd) {
    VisualGrid compressed = params.compressor.forward(grid);
    return {project_visual(compressed, params.projector), grid.features};
  }
  HdTileSet set = hd_tile(grid);
  std::vector<Tensor> projected, raw;
  for (const auto& tile : set.tiles) {
    projected.push_back(project_visual(params.compressor.forward(tile), params.projector));
    raw.push_back(tile.features);
  }
  projected.push_back(project_visual(params.compressor.forward(set.thumbnail), params.projector));
  raw.push_back(set.thumbnail.features);
  Tensor raw_keys = cfg.hd_embq_all_tiles ? concat_rows(raw) : set.thumbnail.features;
  return {concat_rows(projected), raw_keys};
}

MixedSequence make_prompt(const ModelParams& params, const VisualGrid& grid,
                          const std::vector<int>& text_ids, const std::vector<int>& answer_ids) {
  VisualEncoding enc = encode_visual(grid, params);
  return build_sequence(enc.projected, enc.raw, text_ids, params.config.n_queries, answer_ids);
}

namespace {

// Input embeddings for a span of sequence items; text/answer ids go through
// the embedding table, visual rows come from the projected stream, query
// rows from the query embeddings.
Tensor embed_items(const MixedSequence& seq, const ModelParams& p, int i0, int i1) {
  std::vector<Tensor> chunks;
  int i = i0;
  while (i < i1) {
    const SeqItem& it = seq.items[static_cast<std::size_t>(i)];
    int j = i;
    while (j < i1 && seq.items[static_cast<std::size_t>(j)].seg == it.seg &&
           seq.items[static_cast<std::size_t>(j)].turn == it.turn)
      ++j;
    switch (it.seg) {
      case Segment::kVisual: {
        chunks.push_back(slice_rows(seq.visual_proj, it.row,
                                    seq.items[static_cast<std::size_t>(j - 1)].row + 1));
        break;
      }
      case Segment::kQuery: {
        std::vector<int> rows;
        for (int t = i; t < j; ++t) rows.push_back(seq.items[static_cast<std::size_t>(t)].row);
        chunks.push_back(gather_rows(p.queries.embeddings, rows));
        break;
      }
      case Segment::kText:
      case Segment::kAnswer: {
        std::vector<int> ids;
        for (int t = i; t < j; ++t) ids.push_back(seq.items[static_cast<std::size_t>(t)].id);
        chunks.push_back(gather_rows(p.tok_embedding, ids));
        break;
      }
    }
    i = j;
  }
  return concat_rows(chunks);
}

struct HeadSplit {
  std::vector<Tensor> q, k, v;
};

HeadSplit split_heads(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                      const std::vector<int>& positions) {
  HeadSplit hs;
  const int dh = q.cols() / n_heads;
  for (int h = 0; h < n_heads; ++h) {
    hs.q.push_back(rope(slice_cols(q, h * dh, (h + 1) * dh), positions));
    hs.k.push_back(rope(slice_cols(k, h * dh, (h + 1) * dh), positions));
    hs.v.push_back(slice_cols(v, h * dh, (h + 1) * dh));
  }
  return hs;
}

Tensor block_attention_full(const BlockParams& bp, const Tensor& x,
                            const std::vector<int>& positions, int n_heads, DecodeState* cache,
                            int layer) {
  Tensor h = layer_norm(x, bp.ln1_g, bp.ln1_b);
  Tensor q = add_rowvec(matmul(h, bp.wq), bp.bq);
  Tensor k = add_rowvec(matmul(h, bp.wk), bp.bk);
  Tensor v = add_rowvec(matmul(h, bp.wv), bp.bv);
  HeadSplit hs = split_heads(q, k, v, n_heads, positions);

  const int len = x.rows();
  std::vector<int> limits(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) limits[static_cast<std::size_t>(i)] = i + 1;

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hs.q[0].cols()));
  std::vector<Tensor> mixed;
  for (int head = 0; head < n_heads; ++head) {
    Tensor scores = scale(matmul(hs.q[static_cast<std::size_t>(head)],
                                 transpose(hs.k[static_cast<std::size_t>(head)])),
                          inv_scale);
    Tensor w = masked_softmax_rows(scores, limits);
    mixed.push_back(matmul(w, hs.v[static_cast<std::size_t>(head)]));
    if (cache) {
      cache->k_cache[static_cast<std::size_t>(layer)][static_cast<std::size_t>(head)] =
          hs.k[static_cast<std::size_t>(head)];
      cache->v_cache[static_cast<std::size_t>(layer)][static_cast<std::size_t>(head)] =
          hs.v[static_cast<std::size_t>(head)];
    }
  }
  Tensor out = add_rowvec(matmul(concat_cols(mixed), bp.wo), bp.bo);
  return add(x, out);
}

Tensor block_mlp(const BlockParams& bp, const Tensor& x) {
  Tensor h = layer_norm(x, bp.ln2_g, bp.ln2_b);
  Tensor f = add_rowvec(matmul(gelu(add_rowvec(matmul(h, bp.ff_w1), bp.ff_b1)), bp.ff_w2), bp.ff_b2);
  return add(x, f);
}

// One new row through a block, extending the cache.
Tensor block_incremental(const BlockParams& bp, const Tensor& x_row, int position, int n_heads,
                         DecodeState& cache, int layer) {
  Tensor h = layer_norm(x_row, bp.ln1_g, bp.ln1_b);
  Tensor q = add_rowvec(matmul(h, bp.wq), bp.bq);
  Tensor k = add_rowvec(matmul(h, bp.wk), bp.bk);
  Tensor v = add_rowvec(matmul(h, bp.wv), bp.bv);
  const std::vector<int> pos{position};
  HeadSplit hs = split_heads(q, k, v, n_heads, pos);

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hs.q[0].cols()));
  std::vector<Tensor> mixed;
  for (int head = 0; head < n_heads; ++head) {
    Tensor& kc = cache.k_cache[static_cast<std::size_t>(layer)][static_cast<std::size_t>(head)];
    Tensor& vc = cache.v_cache[static_cast<std::size_t>(layer)][static_cast<std::size_t>(head)];
    kc = kc.defined() ? concat_rows({kc, hs.k[static_cast<std::size_t>(head)]})
                      : hs.k[static_cast<std::size_t>(head)];
    vc = vc.defined() ? concat_rows({vc, hs.v[static_cast<std::size_t>(head)]})
                      : hs.v[static_cast<std::size_t>(head)];
    Tensor scores = scale(matmul(hs.q[static_cast<std::size_t>(head)], transpose(kc)), inv_scale);
    Tensor w = masked_softmax_rows(scores, {kc.rows()});
    mixed.push_back(matmul(w, vc));
  }
  Tensor out = add_rowvec(matmul(concat_cols(mixed), bp.wo), bp.bo);
  return block_mlp(bp, add(x_row, out));
}

// Replace the rows of one turn's query segment with the EmbQ output.
Tensor apply_embq_hook(const MixedSequence& seq, const ModelParams& p, Tensor x, int site) {
  for (int turn = 0; turn < seq.n_turns; ++turn) {
    const auto qpos = seq.positions_of(Segment::kQuery, turn);
    if (qpos.empty()) continue;
    const auto tpos = seq.positions_of(Segment::kText, turn);
    Tensor fq = gather_rows(x, qpos);
    Tensor ft = gather_rows(x, tpos);
    Tensor fused = embq_apply(fq, ft, seq.visual_raw, p.embq[static_cast<std::size_t>(site)]);
    const int q0 = qpos.front(), q1 = qpos.back() + 1;
    std::vector<Tensor> parts;
    if (q0 > 0) parts.push_back(slice_rows(x, 0, q0));
    parts.push_back(fused);
    if (q1 < x.rows()) parts.push_back(slice_rows(x, q1, x.rows()));
    x = concat_rows(parts);
  }
  return x;
}

}  // namespace

Tensor forward(const MixedSequence& seq, const ModelParams& params, DecodeState* cache) {
  const ModelConfig& cfg = params.config;
  const int len = seq.length();
  if (len == 0) throw ContractError("forward: empty sequence");
  if (len > cfg.max_seq)
    throw CapacityError("sequence length " + std::to_string(len) + " exceeds max_seq " +
                        std::to_string(cfg.max_seq));
  if (cache) {
    cache->k_cache.assign(static_cast<std::size_t>(cfg.n_layers),
                          std::vector<Tensor>(static_cast<std::size_t>(cfg.n_heads)));
    cache->v_cache.assign(static_cast<std::size_t>(cfg.n_layers),
                          std::vector<Tensor>(static_cast<std::size_t>(cfg.n_heads)));
    cache->length = len;
  }

  Tensor x = embed_items(seq, params, 0, len);
  std::vector<int> positions(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) positions[static_cast<std::size_t>(i)] = i;

  const bool hook_enabled = params.queries.n > 0 && !params.embq.empty();
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    x = block_mlp(params.blocks[static_cast<std::size_t>(layer)],
                  block_attention_full(params.blocks[static_cast<std::size_t>(layer)], x, positions,
                                       cfg.n_heads, cache, layer));
    if (hook_enabled) {
      for (std::size_t site = 0; site < cfg.embq_insertion.size(); ++site)
        if (cfg.embq_insertion[site] == layer + 1)
          x = apply_embq_hook(seq, params, x, static_cast<int>(site));
    }
  }
  Tensor h = layer_norm(x, params.final_ln_g, params.final_ln_b);
  return matmul(h, params.lm_head);
}

namespace {

int argmax_row(const Tensor& logits, int row) {
  const int v = logits.cols();
  int best = 0;
  double bestval = logits(row, 0);
  for (int j = 1; j < v; ++j)
    if (logits(row, j) > bestval) {
      bestval = logits(row, j);
      best = j;
    }
  return best;
}

}  // namespace

std::vector<int> decode_greedy(const MixedSequence& prompt, const ModelParams& params,
                               int max_new) {
  const ModelConfig& cfg = params.config;
  if (prompt.length() + max_new > cfg.max_seq)
    throw CapacityError("prompt " + std::to_string(prompt.length()) + " + max_new " +
                        std::to_string(max_new) + " exceeds max_seq " + std::to_string(cfg.max_seq));
  std::vector<int> out;
  if (max_new == 0) return out;

  DecodeState cache;
  Tensor logits = forward(prompt, params, &cache);
  int next = argmax_row(logits, prompt.length() - 1);

  for (int step = 0; step < max_new; ++step) {
    if (next == kEndOfAnswer) break;
    out.push_back(next);
    if (step + 1 == max_new) break;
    const int pos = prompt.length() + step;
    Tensor x = gather_rows(params.tok_embedding, {next});
    for (int layer = 0; layer < cfg.n_layers; ++layer)
      x = block_incremental(params.blocks[static_cast<std::size_t>(layer)], x, pos, cfg.n_heads,
                            cache, layer);
    cache.length += 1;
    Tensor h = layer_norm(x, params.final_ln_g, params.final_ln_b);
    next = argmax_row(matmul(h, params.lm_head), 0);
  }
  return out;
}

// ---- checkpoint io ----

namespace {

void write_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string config_to_kv(const ModelConfig& c) {
  std::ostringstream os;
  os << "compressor=" << to_string(c.compressor) << "\n";
  os << "d_ff=" << c.d_ff << "\n";
  os << "d_model=" << c.d_model << "\n";
  os << "d_vis=" << c.d_vis << "\n";
  os << "embq_dim=" << c.embq_dim << "\n";
  os << "embq_insertion=";
  for (std::size_t i = 0; i < c.embq_insertion.size(); ++i)
    os << (i ? "," : "") << c.embq_insertion[i];
  os << "\n";
  os << "embq_n_layers=" << c.embq_n_layers << "\n";
  os << "fusion=" << to_string(c.fusion) << "\n";
  os << "grid_h=" << c.grid_h << "\n";
  os << "grid_w=" << c.grid_w << "\n";
  os << "hd=" << (c.hd ? 1 : 0) << "\n";
  os << "hd_embq_all_tiles=" << (c.hd_embq_all_tiles ? 1 : 0) << "\n";
  os << "max_seq=" << c.max_seq << "\n";
  os << "n_heads=" << c.n_heads << "\n";
  os << "n_layers=" << c.n_layers << "\n";
  os << "n_queries=" << c.n_queries << "\n";
  os << "query_init=" << to_string(c.query_init) << "\n";
  os << "s=" << c.s << "\n";
  os << "sap_hidden=" << c.sap_hidden << "\n";
  os << "seed=" << c.seed << "\n";
  os << "vocab_size=" << c.vocab_size << "\n";
  return os.str();
}

ModelConfig config_from_kv(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint config line without '=': " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "compressor") c.compressor = compressor_kind_from(val);
    else if (key == "d_ff") c.d_ff = std::stoi(val);
    else if (key == "d_model") c.d_model = std::stoi(val);
    else if (key == "d_vis") c.d_vis = std::stoi(val);
    else if (key == "embq_dim") c.embq_dim = std::stoi(val);
    else if (key == "embq_insertion") {
      c.embq_insertion.clear();
      std::istringstream vs(val);
      std::string tok;
      while (std::getline(vs, tok, ',')) c.embq_insertion.push_back(std::stoi(tok));
    } else if (key == "embq_n_layers") c.embq_n_layers = std::stoi(val);
    else if (key == "fusion") c.fusion = fusion_from(val);
    else if (key == "grid_h") c.grid_h = std::stoi(val);
    else if (key == "grid_w") c.grid_w = std::stoi(val);
    else if (key == "hd") c.hd = val == "1";
    else if (key == "hd_embq_all_tiles") c.hd_embq_all_tiles = val == "1";
    else if (key == "max_seq") c.max_seq = std::stoi(val);
    else if (key == "n_heads") c.n_heads = std::stoi(val);
    else if (key == "n_layers") c.n_layers = std::stoi(val);
    else if (key == "n_queries") c.n_queries = std::stoi(val);
    else if (key == "query_init") c.query_init = query_init_from(val);
    else if (key == "s") c.s = std::stoi(val);
    else if (key == "sap_hidden") c.sap_hidden = std::stoi(val);
    else if (key == "seed") c.seed = std::stoull(val);
    else if (key == "vocab_size") c.vocab_size = std::stoi(val);
    else throw IoError("checkpoint config has unknown key: " + key);
  }
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  f.write("SLTH", 4);
  const std::string cfg = config_to_kv(params.config);
  write_u32(f, static_cast<std::uint32_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto named = params.named_parameters();
  write_u32(f, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, tensor] : named) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(f, static_cast<std::uint32_t>(tensor.shape().size()));
    for (int dim : tensor.shape()) write_u32(f, static_cast<std::uint32_t>(dim));
    f.write(reinterpret_cast<const char*>(tensor.data().data()),
            static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  }
  if (!f) throw IoError("save_checkpoint: short write to " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "SLTH", 4) != 0)
    throw IoError("load_checkpoint: bad magic in " + path);
  const std::uint32_t cfg_len = read_u32(f);
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), cfg_len);
  ModelParams params = ModelParams::init(config_from_kv(cfg_text));

  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : params.named_parameters()) by_name.emplace(name, tensor);

  const std::uint32_t count = read_u32(f);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(f);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(read_u32(f)));
      numel *= static_cast<std::size_t>(shape.back());
    }
    std::vector<double> data(numel);
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(numel * sizeof(double)));
    if (!f) throw IoError("load_checkpoint: truncated tensor " + name);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("load_checkpoint: unexpected tensor " + name);
    if (it->second.shape() != shape)
      throw IoError("load_checkpoint: shape mismatch for " + name + ": file " + shape_str(shape) +
                    " vs model " + shape_str(it->second.shape()));
    it->second.mutable_data() = std::move(data);
  }
  return params;
}

}  // namespace sloth

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sloth {

enum class ImageKind { kBase, kHd };
enum class Phase { kPrefill, kDecode };

// How a method's visual-side token count is derived:
//   fixed      - constant count (LLaVA-style)
//   sap        - encoder_tokens / s^2 compressed tokens plus the query pad
//   hd_tiling  - four tiles and a thumbnail, each compressed, plus queries
//   dynamic    - per-benchmark constants (dynamic-resolution methods are
//                modeled by their reported counts, not simulated)
struct TokenPolicy {
  enum class Kind { kFixed, kSap, kHdTiling, kDynamic };
  Kind kind = Kind::kFixed;
  int fixed_count = 0;
  int encoder_tokens = 729;  // full-resolution encoder grid size
  int s = 3;
  std::map<std::string, int> per_benchmark;
};

struct ArchSpec {
  std::string name;
  std::uint64_t llm_params = 0;
  int n_layers = 32;
  int d_model = 2560;
  int d_ff = 10240;
  int n_heads = 32;
  TokenPolicy policy;
  int query_count = 0;

  ImageKind natural_image() const {
    return policy.kind == TokenPolicy::Kind::kHdTiling ? ImageKind::kHd : ImageKind::kBase;
  }
};

struct CostScenario {
  std::string benchmark = "average";
  int text_len = 20;
};

struct CostReport {
  std::string method;
  int token_number = 0;
  std::uint64_t prefill_flops = 0;
  std::uint64_t decode_flops_per_token = 0;
  std::uint64_t kv_bytes = 0;
  std::uint64_t param_count = 0;
  double delta_tokens_pct = 0.0;
  double delta_flops_pct = 0.0;
};

// Visual-side token count (compressed visual tokens + query pad).
int count_tokens(const ArchSpec& spec, ImageKind image, const std::string& benchmark = "average");

// Analytic LLM cost. Convention (documented here, applied everywhere):
// per layer, prefill over L tokens costs
//     8*L*d^2 (qkv+output projections) + 4*L^2*d (scores and value mix)
//     + 4*L*d*d_ff (two-matmul MLP)
// operation units; decoding one token at total context C costs
//     8*d^2 + 4*(C-1)*d + 4*d*d_ff
// (the fresh token's self-interaction rides inside the projection term).
// Totals are summed over layers and doubled (2 FLOPs per multiply-accumulate).
// Embedding lookup, LM head and the vision encoder are not included.
std::uint64_t estimate_flops(const ArchSpec& spec, int seq_len, Phase phase);

// 2 * layers * len * d_model * bytes_per_value.
std::uint64_t kv_cache_bytes(const ArchSpec& spec, int seq_len, int bytes_per_value = 8);

// One report row per spec; percentage deltas are against specs[ref_index]
// (the reference row reports 0 deltas). Each spec is evaluated at its
// natural image kind; prefill length is token_number + scenario.text_len.
std::vector<CostReport> compare(const std::vector<ArchSpec>& specs, const CostScenario& scenario,
                                int ref_index = 0);

// The comparison columns: LLaVA-1.5-7B (reference), IMP-3B, Qwen2-VL-2B,
// InternVL2-2B, FlashSloth, FlashSloth-HD.
std::vector<ArchSpec> builtin_specs();

std::string cost_csv(const std::vector<CostReport>& rows);
std::string cost_json(const std::vector<CostReport>& rows);

}  // namespace sloth

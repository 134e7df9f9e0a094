#include "sloth/cost.hpp"

#include <cstdio>

#include <json.hpp>

#include "sloth/errors.hpp"

namespace sloth {

int count_tokens(const ArchSpec& spec, ImageKind image, const std::string& benchmark) {
  const TokenPolicy& p = spec.policy;
  switch (p.kind) {
    case TokenPolicy::Kind::kFixed:
      if (image != ImageKind::kBase)
        throw ContractError(spec.name + ": fixed token policy is defined for base images only");
      return p.fixed_count + spec.query_count;
    case TokenPolicy::Kind::kSap: {
      if (image != ImageKind::kBase)
        throw ContractError(spec.name + ": sap policy is defined for base images only");
      if (p.encoder_tokens % (p.s * p.s) != 0)
        throw ContractError(spec.name + ": encoder grid not divisible by s^2");
      return p.encoder_tokens / (p.s * p.s) + spec.query_count;
    }
    case TokenPolicy::Kind::kHdTiling: {
      if (image != ImageKind::kHd)
        throw ContractError(spec.name + ": hd_tiling policy is defined for hd images only");
      if (p.encoder_tokens % (p.s * p.s) != 0)
        throw ContractError(spec.name + ": encoder grid not divisible by s^2");
      return 5 * (p.encoder_tokens / (p.s * p.s)) + spec.query_count;
    }
    case TokenPolicy::Kind::kDynamic: {
      if (image != ImageKind::kBase)
        throw ContractError(spec.name + ": dynamic policy is defined for base images only");
      const auto it = p.per_benchmark.find(benchmark);
      if (it == p.per_benchmark.end())
        throw ContractError(spec.name + ": no token count recorded for benchmark " + benchmark);
      return it->second + spec.query_count;
    }
  }
  throw ContractError("count_tokens: bad policy kind");
}

std::uint64_t estimate_flops(const ArchSpec& spec, int seq_len, Phase phase) {
  if (seq_len < 1) throw ContractError("estimate_flops: seq_len must be at least 1");
  const std::uint64_t d = static_cast<std::uint64_t>(spec.d_model);
  const std::uint64_t ff = static_cast<std::uint64_t>(spec.d_ff);
  const std::uint64_t len = static_cast<std::uint64_t>(seq_len);
  std::uint64_t per_layer = 0;
  if (phase == Phase::kPrefill) {
    per_layer = 8 * len * d * d + 4 * len * len * d + 4 * len * d * ff;
  } else {
    per_layer = 8 * d * d + 4 * (len - 1) * d + 4 * d * ff;
  }
  return 2 * static_cast<std::uint64_t>(spec.n_layers) * per_layer;
}

std::uint64_t kv_cache_bytes(const ArchSpec& spec, int seq_len, int bytes_per_value) {
  return 2ULL * static_cast<std::uint64_t>(spec.n_layers) * static_cast<std::uint64_t>(seq_len) *
         static_cast<std::uint64_t>(spec.d_model) * static_cast<std::uint64_t>(bytes_per_value);
}

std::vector<CostReport> compare(const std::vector<ArchSpec>& specs, const CostScenario& scenario,
                                int ref_index) {
  if (specs.empty()) throw ContractError("compare: need at least one spec");
  if (ref_index < 0 || ref_index >= static_cast<int>(specs.size()))
    throw ContractError("compare: reference index out of range");

  std::vector<CostReport> rows;
  rows.reserve(specs.size());
  for (const ArchSpec& spec : specs) {
    CostReport r;
    r.method = spec.name;
    r.token_number = count_tokens(spec, spec.natural_image(), scenario.benchmark);
    const int prefill_len = r.token_number + scenario.text_len;
    r.prefill_flops = estimate_flops(spec, prefill_len, Phase::kPrefill);
    r.decode_flops_per_token = estimate_flops(spec, prefill_len + 1, Phase::kDecode);
    r.kv_bytes = kv_cache_bytes(spec, prefill_len);
    r.param_count = spec.llm_params;
    rows.push_back(std::move(r));
  }
  const CostReport& ref = rows[static_cast<std::size_t>(ref_index)];
  const double ref_tokens = ref.token_number;
  const double ref_flops = static_cast<double>(ref.prefill_flops);
  for (CostReport& r : rows) {
    r.delta_tokens_pct = 100.0 * (r.token_number - ref_tokens) / ref_tokens;
    r.delta_flops_pct = 100.0 * (static_cast<double>(r.prefill_flops) - ref_flops) / ref_flops;
  }
  return rows;
}

std::vector<ArchSpec> builtin_specs() {
  std::vector<ArchSpec> specs;

  ArchSpec llava;
  llava.name = "LLaVA-1.5-7B";
  llava.llm_params = 7000000000ULL;
  llava.n_layers = 32;
  llava.d_model = 4096;
  llava.d_ff = 11008;
  llava.n_heads = 32;
  llava.policy = {TokenPolicy::Kind::kFixed, 576, 576, 1, {}};
  specs.push_back(llava);

  ArchSpec imp;
  imp.name = "IMP-3B";
  imp.llm_params = 3100000000ULL;
  imp.n_layers = 32;
  imp.d_model = 2560;
  imp.d_ff = 10240;
  imp.n_heads = 32;
  imp.policy = {TokenPolicy::Kind::kFixed, 729, 729, 1, {}};
  specs.push_back(imp);

  ArchSpec qwen;
  qwen.name = "Qwen2-VL-2B";
  qwen.llm_params = 2000000000ULL;
  qwen.n_layers = 28;
  qwen.d_model = 1536;
  qwen.d_ff = 8960;
  qwen.n_heads = 12;
  qwen.policy.kind = TokenPolicy::Kind::kDynamic;
  qwen.policy.per_benchmark = {{"gqa", 352},  {"textvqa", 977}, {"mme", 646},
                               {"mmb", 385},  {"pope", 353},    {"average", 466}};
  specs.push_back(qwen);

  ArchSpec internvl;
  internvl.name = "InternVL2-2B";
  internvl.llm_params = 2000000000ULL;
  internvl.n_layers = 24;
  internvl.d_model = 2048;
  internvl.d_ff = 8192;
  internvl.n_heads = 16;
  internvl.policy.kind = TokenPolicy::Kind::kDynamic;
  internvl.policy.per_benchmark = {{"gqa", 1699}, {"textvqa", 1668}, {"mme", 1478},
                                   {"mmb", 1296}, {"pope", 1666},    {"average", 1561}};
  specs.push_back(internvl);

  ArchSpec sloth;
  sloth.name = "FlashSloth";
  sloth.llm_params = 3200000000ULL;
  sloth.n_layers = 32;
  sloth.d_model = 2560;
  sloth.d_ff = 10240;
  sloth.n_heads = 32;
  sloth.policy = {TokenPolicy::Kind::kSap, 0, 729, 3, {}};
  sloth.query_count = 9;
  specs.push_back(sloth);

  ArchSpec sloth_hd = sloth;
  sloth_hd.name = "FlashSloth-HD";
  sloth_hd.policy.kind = TokenPolicy::Kind::kHdTiling;
  specs.push_back(sloth_hd);

  return specs;
}

std::string cost_csv(const std::vector<CostReport>& rows) {
  std::string out =
      "method,token_number,prefill_flops,decode_flops_per_token,kv_bytes,param_count,"
      "delta_tokens_pct,delta_flops_pct\n";
  char buf[512];
  for (const CostReport& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%llu,%llu,%llu,%llu,%.2f,%.2f\n", r.method.c_str(),
                  r.token_number, static_cast<unsigned long long>(r.prefill_flops),
                  static_cast<unsigned long long>(r.decode_flops_per_token),
                  static_cast<unsigned long long>(r.kv_bytes),
                  static_cast<unsigned long long>(r.param_count), r.delta_tokens_pct,
                  r.delta_flops_pct);
    out += buf;
  }
  return out;
}

std::string cost_json(const std::vector<CostReport>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const CostReport& r : rows) {
    arr.push_back({{"method", r.method},
                   {"token_number", r.token_number},
                   {"prefill_flops", r.prefill_flops},
                   {"decode_flops_per_token", r.decode_flops_per_token},
                   {"kv_bytes", r.kv_bytes},
                   {"param_count", r.param_count},
                   {"delta_tokens_pct", r.delta_tokens_pct},
                   {"delta_flops_pct", r.delta_flops_pct}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace sloth

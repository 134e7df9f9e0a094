#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sloth/config.hpp"
#include "sloth/cost.hpp"
#include "sloth/model.hpp"
#include "sloth/trainer.hpp"

namespace {

using namespace sloth;

RunConfig load_or_default(const std::string& config_path, long long seed_override, bool hd) {
  RunConfig rc = config_path.empty() ? default_run_config() : load_run_config(config_path);
  if (seed_override >= 0) rc.model.seed = static_cast<std::uint64_t>(seed_override);
  if (hd) rc.model.hd = true;
  return rc;
}

ArchSpec arch_from_model(const ModelConfig& m) {
  ArchSpec spec;
  spec.name = "local";
  spec.n_layers = m.n_layers;
  spec.d_model = m.d_model;
  spec.d_ff = m.d_ff;
  spec.n_heads = m.n_heads;
  return spec;
}

std::string printable(const std::string& s) {
  std::string out;
  for (char ch : s) out.push_back(ch >= 32 && ch < 127 ? ch : '.');
  return out;
}

int cmd_demo(const RunConfig& rc) {
  const ModelConfig& m = rc.model;
  std::printf("demo seed=%llu hd=%d compressor=%s\n", static_cast<unsigned long long>(m.seed),
              m.hd ? 1 : 0, to_string(m.compressor).c_str());

  ModelParams params = ModelParams::init(m);
  const int gh = m.hd ? 2 * m.grid_h : m.grid_h;
  const int gw = m.hd ? 2 * m.grid_w : m.grid_w;
  VisualGrid grid = synth_features(mix_seed(m.seed, 0xD37A), gh, gw, m.d_vis);

  const std::string instruction = "describe the image.";
  MixedSequence prompt =
      make_prompt(params, grid, toy_tokenize(instruction, m.vocab_size));

  const int visual = prompt.visual_count();
  const int queries = prompt.query_count();
  const int text = static_cast<int>(prompt.positions_of(Segment::kText).size());
  std::printf("segments: visual=%d text=%d query=%d\n", visual, text, queries);
  std::printf("visual=%d queries=%d total_visual_side=%d\n", visual, queries, visual + queries);

  if (m.compressor == CompressorKind::kSap) {
    Tensor sample_grid_block = partition_regions(grid, m.s).front();
    Tensor alpha = region_weights(sample_grid_block, params.compressor.sap);
    double mx = 0.0;
    for (std::size_t i = 0; i < alpha.numel(); ++i) mx = std::max(mx, alpha.data()[i]);
    std::printf("sap region0 alpha_max=%.6f over %d tokens\n", mx, alpha.dim(0));
  }

  const std::vector<int> answer = decode_greedy(prompt, params, rc.train.max_new);
  std::printf("prefill positions=%d\n", prompt.length());
  std::printf("answer tokens=%d text=\"%s\"\n", static_cast<int>(answer.size()),
              printable(toy_detokenize(answer)).c_str());

  const std::uint64_t proxy =
      estimate_flops(arch_from_model(m), prompt.length(), Phase::kPrefill);
  std::printf("prefill_flops_proxy=%llu\n", static_cast<unsigned long long>(proxy));
  return 0;
}

int cmd_cost(const RunConfig& rc, const std::string& out_path) {
  const auto rows = compare(builtin_specs(), rc.cost);
  const bool json_out =
      out_path.size() > 5 && out_path.substr(out_path.size() - 5) == ".json";
  const std::string text = json_out ? cost_json(rows) : cost_csv(rows);
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream f(out_path);
    if (!f) throw IoError("cannot open output file: " + out_path);
    f << text;
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

ModelConfig gradcheck_config(const RunConfig& rc) {
  ModelConfig g;
  g.n_layers = 2;
  g.d_model = 8;
  g.n_heads = 2;
  g.d_ff = 16;
  g.vocab_size = kMinVocab;
  g.d_vis = 4;
  g.grid_h = 4;
  g.grid_w = 4;
  g.s = 2;
  g.sap_hidden = 4;
  g.n_queries = 2;
  g.embq_insertion = {1};
  g.embq_dim = 6;
  g.embq_n_layers = rc.model.embq_n_layers;
  g.fusion = rc.model.fusion;
  g.compressor = rc.model.compressor;
  g.query_init = QueryInit::kDot;
  g.max_seq = 512;
  g.seed = rc.model.seed;
  g.validate();
  return g;
}

int cmd_gradcheck(const RunConfig& rc) {
  const ModelConfig cfg = gradcheck_config(rc);
  ModelParams params = ModelParams::init(cfg);
  ToyDataset data = ToyDataset::generate(rc.train.dataset_seed, 1, cfg.grid_h, cfg.grid_w, cfg.d_vis);
  const ToyExample& ex = data.examples.front();

  auto loss_value = [&]() {
    VisualGrid grid = data.grid_of(ex);
    MixedSequence seq = make_prompt(params, grid, toy_tokenize(ex.instruction, cfg.vocab_size),
                                    answer_token_ids(ex.answer, cfg.vocab_size));
    return answer_loss(forward(seq, params), seq, cfg.vocab_size).item();
  };

  auto named = params.named_parameters();
  for (auto& [name, tensor] : named) tensor.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    VisualGrid grid = data.grid_of(ex);
    MixedSequence seq = make_prompt(params, grid, toy_tokenize(ex.instruction, cfg.vocab_size),
                                    answer_token_ids(ex.answer, cfg.vocab_size));
    Tensor loss = answer_loss(forward(seq, params), seq, cfg.vocab_size);
    backward(loss, tape);
  }

  std::map<std::string, double> group_err;
  for (auto& [name, tensor] : named) {
    Tensor analytic = Tensor::from(tensor.shape(), tensor.grad());
    Tensor numeric = finite_diff_grad(
        [&](const Tensor& probe) {
          std::vector<double> saved = tensor.data();
          tensor.mutable_data() = probe.data();
          const double v = loss_value();
          tensor.mutable_data() = std::move(saved);
          return v;
        },
        tensor);
    const double err = max_rel_err(analytic, numeric);
    auto& slot = group_err[param_group(name)];
    slot = std::max(slot, err);
  }

  double worst = 0.0;
  for (const auto& [group, err] : group_err) {
    std::printf("gradcheck %-10s max_rel_err=%.3e\n", group.c_str(), err);
    worst = std::max(worst, err);
  }
  std::printf("gradcheck overall max_rel_err=%.3e threshold=1e-4\n", worst);
  if (worst > 1e-4) {
    std::printf("gradcheck FAILED\n");
    return 3;
  }
  std::printf("gradcheck OK\n");
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& out_prefix) {
  const std::string prefix = out_prefix.empty() ? "train" : out_prefix;
  const ModelConfig cfg = toy_train_config(rc);
  ModelParams params = ModelParams::init(cfg);
  ToyDataset data =
      ToyDataset::generate(rc.train.dataset_seed, rc.train.train_examples, cfg.grid_h, cfg.grid_w,
                           cfg.d_vis);

  auto report = [&](const char* tag) {
    std::printf("%s llm=%016llx projector=%016llx compressor=%016llx embq=%016llx queries=%016llx\n",
                tag, static_cast<unsigned long long>(params_checksum(params, "llm")),
                static_cast<unsigned long long>(params_checksum(params, "projector")),
                static_cast<unsigned long long>(params_checksum(params, "compressor")),
                static_cast<unsigned long long>(params_checksum(params, "embq")),
                static_cast<unsigned long long>(params_checksum(params, "queries")));
  };

  report("stage1 pre ");
  const auto s1 = train_stage(params, data, FreezeMask::stage1(), rc.train.steps_stage1,
                              rc.train.lr_stage1);
  report("stage1 post");
  write_loss_csv(prefix + "_stage1.csv", s1);
  std::printf("stage1 steps=%d first_loss=%.6f final_loss=%.6f\n", rc.train.steps_stage1,
              s1.front(), s1.back());

  const auto s2 = train_stage(params, data, FreezeMask::stage2(), rc.train.steps_stage2,
                              rc.train.lr_stage2);
  report("stage2 post");
  write_loss_csv(prefix + "_stage2.csv", s2);
  std::printf("stage2 steps=%d first_loss=%.6f final_loss=%.6f\n", rc.train.steps_stage2,
              s2.front(), s2.back());

  const double acc = eval_accuracy(params, data, rc.train.max_new);
  std::printf("train_set_accuracy=%.4f\n", acc);

  save_checkpoint(prefix + "_model.slth", params);
  std::printf("wrote %s_stage1.csv %s_stage2.csv %s_model.slth\n", prefix.c_str(), prefix.c_str(),
              prefix.c_str());
  return 0;
}

struct AblateVariant {
  std::string value;
  ModelConfig config;
  int paper_queries;  // query count used for the paper-scale cost columns
};

const std::map<std::string, std::vector<std::string>>& ablate_axes() {
  static const std::map<std::string, std::vector<std::string>> axes = {
      {"compressor", {"avg_pool", "sap", "pixel_shuffle", "ldp"}},
      {"query_count", {"0", "6", "9", "12", "15"}},
      {"query_init", {"dot", "random", "fixed_dot"}},
      {"fusion", {"add", "replace", "gate"}},
      {"embq_dim", {"576", "768", "1152", "2560"}},
      {"embq_layers", {"1", "2", "3"}},
      {"insertion_layer", {"4", "8", "16", "24", "multi"}},
  };
  return axes;
}

AblateVariant make_variant(const RunConfig& rc, const std::string& axis, const std::string& value) {
  AblateVariant v;
  v.value = value;
  v.config = toy_train_config(rc);
  v.config.n_layers = 24;  // hosts every insertion-layer value
  v.paper_queries = v.config.n_queries;
  if (axis == "compressor") {
    v.config.compressor = compressor_kind_from(value);
  } else if (axis == "query_count") {
    v.config.n_queries = std::stoi(value);
    v.paper_queries = v.config.n_queries;
  } else if (axis == "query_init") {
    v.config.query_init = query_init_from(value);
  } else if (axis == "fusion") {
    v.config.fusion = fusion_from(value);
  } else if (axis == "embq_dim") {
    v.config.embq_dim = std::stoi(value);
  } else if (axis == "embq_layers") {
    v.config.embq_n_layers = std::stoi(value);
  } else if (axis == "insertion_layer") {
    v.config.embq_insertion = value == "multi" ? std::vector<int>{8, 16, 24}
                                               : std::vector<int>{std::stoi(value)};
  }
  v.config.validate();
  return v;
}

struct AblateRow {
  std::string value;
  int token_number = 0;
  int embq_param_tensors = 0;
  double final_loss = 0.0;
  double eval_accuracy = 0.0;
  std::uint64_t prefill_flops = 0;
};

int cmd_ablate(const RunConfig& rc, const std::string& axis, const std::string& out_path) {
  const auto& axes = ablate_axes();
  const auto it = axes.find(axis);
  if (it == axes.end()) {
    std::fprintf(stderr, "unknown ablation axis: %s\nknown axes:", axis.c_str());
    for (const auto& [name, values] : axes) std::fprintf(stderr, " %s", name.c_str());
    std::fprintf(stderr, "\n");
    return 1;
  }

  std::vector<AblateVariant> variants;
  for (const std::string& value : it->second) variants.push_back(make_variant(rc, axis, value));

  const int total = rc.train.train_examples + rc.train.eval_examples;
  ToyDataset train_set, eval_set;
  {
    ToyDataset all = ToyDataset::generate(rc.train.dataset_seed, total, rc.train.grid_h,
                                          rc.train.grid_w, rc.train.d_vis);
    train_set = all;
    train_set.examples.assign(all.examples.begin(),
                              all.examples.begin() + rc.train.train_examples);
    eval_set = all;
    eval_set.examples.assign(all.examples.begin() + rc.train.train_examples, all.examples.end());
  }

  // paper-scale cost columns come from the FlashSloth arch with the
  // variant's query count
  ArchSpec paper = builtin_specs()[4];

  std::vector<AblateRow> rows(variants.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= variants.size()) return;
      const AblateVariant& v = variants[i];
      ModelParams params = ModelParams::init(v.config);

      const auto losses = train_stage(params, train_set, FreezeMask::stage2(),
                                      rc.train.ablate_steps, rc.train.lr_stage2);
      AblateRow row;
      row.value = v.value;
      ArchSpec spec = paper;
      spec.query_count = v.paper_queries;
      row.token_number = count_tokens(spec, ImageKind::kBase);
      row.prefill_flops =
          estimate_flops(spec, row.token_number + rc.cost.text_len, Phase::kPrefill);
      for (const auto& [name, tensor] : params.named_parameters()) {
        const std::string group = param_group(name);
        if (group == "embq" || group == "queries") ++row.embq_param_tensors;
      }
      row.final_loss = losses.back();
      row.eval_accuracy = eval_accuracy(params, eval_set, rc.train.max_new);
      rows[i] = std::move(row);
    }
  };

  int pool = 1;
  if (const char* env = std::getenv("SLOTH_THREADS")) pool = std::max(1, std::atoi(env));
  pool = std::min<int>(pool, static_cast<int>(variants.size()));
  if (pool <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < pool; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::string csv = "axis,variant,token_number,embq_param_tensors,final_loss,eval_accuracy,prefill_flops\n";
  char buf[256];
  for (const AblateRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%d,%.6f,%.6f,%llu\n", axis.c_str(),
                  row.value.c_str(), row.token_number, row.embq_param_tensors, row.final_loss,
                  row.eval_accuracy, static_cast<unsigned long long>(row.prefill_flops));
    csv += buf;
  }

  const std::string path = out_path.empty() ? "ablate_" + axis + ".csv" : out_path;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open output file: " + path);
  f << csv;
  std::printf("wrote %s (%d variants)\n", path.c_str(), static_cast<int>(rows.size()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flashsloth: embedded visual compression toy pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path, axis;
  long long seed = -1;
  bool hd = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", seed, "override config seed");
    cmd->add_flag("--hd", hd, "high-resolution tiling pipeline");
    cmd->add_option("--out", out_path, "output path");
  };

  CLI::App* demo = app.add_subcommand("demo", "compress, prefill and decode on a synthetic image");
  add_common(demo);
  CLI::App* cost = app.add_subcommand("cost", "token/FLOPs comparison table");
  add_common(cost);
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  add_common(gradcheck);
  CLI::App* train = app.add_subcommand("train", "two-stage toy training");
  add_common(train);
  CLI::App* ablate = app.add_subcommand("ablate", "sweep one design axis");
  add_common(ablate);
  ablate->add_option("--axis", axis, "compressor|query_count|query_init|fusion|embq_dim|embq_layers|insertion_layer")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const sloth::RunConfig rc = load_or_default(config_path, seed, hd);
    if (app.got_subcommand(demo)) return cmd_demo(rc);
    if (app.got_subcommand(cost)) return cmd_cost(rc, out_path);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(rc);
    if (app.got_subcommand(train)) return cmd_train(rc, out_path);
    if (app.got_subcommand(ablate)) return cmd_ablate(rc, axis, out_path);
  } catch (const sloth::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

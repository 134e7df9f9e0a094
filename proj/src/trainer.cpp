#include "sloth/trainer.hpp"

#include <cmath>
#include <fstream>

namespace sloth {

std::string param_group(const std::string& name) {
  if (name == "projector") return "projector";
  if (name.rfind("compressor.", 0) == 0) return "compressor";
  if (name.rfind("embq.", 0) == 0) return "embq";
  if (name == "queries") return "queries";
  return "llm";
}

FreezeMask FreezeMask::stage1() {
  return {{{"projector", true},
           {"compressor", true},
           {"embq", false},
           {"queries", false},
           {"llm", false}}};
}

FreezeMask FreezeMask::stage2() {
  return {{{"projector", true},
           {"compressor", true},
           {"embq", true},
           {"queries", true},
           {"llm", true}}};
}

bool FreezeMask::trainable(const std::string& param_name, const ModelParams& params) const {
  const std::string group = param_group(param_name);
  const auto it = groups.find(group);
  const bool base = it != groups.end() && it->second;
  if (group == "queries" && params.queries.init_mode == QueryInit::kFixedDot) return false;
  return base;
}

ToyDataset ToyDataset::generate(std::uint64_t seed, int count, int grid_h, int grid_w, int d_vis) {
  if (count < 1) throw ContractError("ToyDataset::generate: count must be positive");
  ToyDataset ds;
  ds.grid_h = grid_h;
  ds.grid_w = grid_w;
  ds.d_vis = d_vis;
  static const char* kNames[4] = {"tl", "tr", "bl", "br"};
  for (int i = 0; i < count; ++i) {
    ToyExample ex;
    ex.grid_seed = mix_seed(seed, static_cast<std::uint64_t>(i) + 1);
    ex.instruction = "brightest quadrant?";
    VisualGrid grid = synth_features(ex.grid_seed, grid_h, grid_w, d_vis);
    // quadrant means over every feature entry
    double sums[4] = {0, 0, 0, 0};
    long counts[4] = {0, 0, 0, 0};
    const int hh = grid_h / 2, hw = grid_w / 2;
    for (int r = 0; r < grid_h; ++r)
      for (int c = 0; c < grid_w; ++c) {
        const int q = (r < hh ? 0 : 2) + (c < hw ? 0 : 1);
        for (int f = 0; f < d_vis; ++f) sums[q] += grid.features(r * grid_w + c, f);
        counts[q] += d_vis;
      }
    int best = 0;
    double bestval = sums[0] / counts[0];
    for (int q = 1; q < 4; ++q) {
      const double v = sums[q] / counts[q];
      if (v > bestval) {
        bestval = v;
        best = q;
      }
    }
    ex.answer = kNames[best];
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

VisualGrid ToyDataset::grid_of(const ToyExample& ex) const {
  return synth_features(ex.grid_seed, grid_h, grid_w, d_vis);
}

std::vector<int> answer_token_ids(const std::string& answer, int vocab_size) {
  std::vector<int> ids = toy_tokenize(answer, vocab_size);
  ids.push_back(kEndOfAnswer);
  return ids;
}

Tensor answer_loss(const Tensor& logits, const MixedSequence& seq, int vocab_size) {
  const auto apos = seq.positions_of(Segment::kAnswer);
  if (apos.empty()) throw ContractError("answer_loss: sequence has no answer segment");
  std::vector<int> rows, targets;
  rows.reserve(apos.size());
  targets.reserve(apos.size());
  for (int p : apos) {
    rows.push_back(p - 1);  // shifted by one: the previous position predicts p
    const int id = seq.items[static_cast<std::size_t>(p)].id;
    if (id < 0 || id >= vocab_size) throw ContractError("answer_loss: bad answer id");
    targets.push_back(id);
  }
  return cross_entropy_mean(gather_rows(logits, rows), targets);
}

namespace {

struct AdamSlot {
  std::vector<double> m, v;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

}  // namespace

std::vector<double> train_stage(ModelParams& params, const ToyDataset& data,
                                const FreezeMask& mask, int steps, double lr) {
  if (data.examples.empty()) throw ContractError("train_stage: empty dataset");
  if (steps < 1) throw ContractError("train_stage: steps must be positive");

  auto named = params.named_parameters();
  std::vector<std::pair<Tensor, AdamSlot>> slots;
  for (auto& [name, tensor] : named)
    if (mask.trainable(name, params))
      slots.push_back({tensor, {std::vector<double>(tensor.numel(), 0.0),
                                std::vector<double>(tensor.numel(), 0.0)}});

  std::vector<double> trajectory;
  trajectory.reserve(static_cast<std::size_t>(steps));

  for (int step = 1; step <= steps; ++step) {
    for (auto& [name, tensor] : named) tensor.zero_grad();

    Tape tape;
    double mean_loss;
    {
      TapeScope scope(tape);
      Tensor total;
      for (const auto& ex : data.examples) {
        VisualGrid grid = data.grid_of(ex);
        MixedSequence seq =
            make_prompt(params, grid, toy_tokenize(ex.instruction, params.config.vocab_size),
                        answer_token_ids(ex.answer, params.config.vocab_size));
        Tensor loss = answer_loss(forward(seq, params), seq, params.config.vocab_size);
        total = total.defined() ? add(total, loss) : loss;
      }
      Tensor mean = scale(total, 1.0 / static_cast<double>(data.examples.size()));
      backward(mean, tape);
      mean_loss = mean.item();
    }
    trajectory.push_back(mean_loss);

    const double bc1 = 1.0 - std::pow(kBeta1, step);
    const double bc2 = 1.0 - std::pow(kBeta2, step);
    for (auto& [tensor, slot] : slots) {
      const auto& g = tensor.grad();
      auto& value = tensor.mutable_data();
      for (std::size_t i = 0; i < value.size(); ++i) {
        slot.m[i] = kBeta1 * slot.m[i] + (1.0 - kBeta1) * g[i];
        slot.v[i] = kBeta2 * slot.v[i] + (1.0 - kBeta2) * g[i] * g[i];
        value[i] -= lr * (slot.m[i] / bc1) / (std::sqrt(slot.v[i] / bc2) + kEps);
      }
    }
  }
  return trajectory;
}

double eval_accuracy(const ModelParams& params, const ToyDataset& data, int max_new) {
  if (data.examples.empty()) throw ContractError("eval_accuracy: empty dataset");
  int hits = 0;
  for (const auto& ex : data.examples) {
    VisualGrid grid = data.grid_of(ex);
    MixedSequence prompt =
        make_prompt(params, grid, toy_tokenize(ex.instruction, params.config.vocab_size));
    const std::vector<int> ids = decode_greedy(prompt, params, max_new);
    if (toy_detokenize(ids) == ex.answer) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.examples.size());
}

std::uint64_t params_checksum(const ModelParams& params, const std::string& group) {
  std::uint64_t h = 14695981039346656037ULL;
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, tensor] : params.named_parameters()) {
    if (!group.empty() && param_group(name) != group) continue;
    feed(name.data(), name.size());
    feed(tensor.data().data(), tensor.numel() * sizeof(double));
  }
  return h;
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
  std::ofstream f(path);
  if (!f) throw IoError("write_loss_csv: cannot open " + path);
  f << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) f << i + 1 << "," << losses[i] << "\n";
}

}  // namespace sloth

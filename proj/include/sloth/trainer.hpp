#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sloth/model.hpp"

namespace sloth {

// Parameter group of a named tensor: projector | compressor | embq | queries | llm.
std::string param_group(const std::string& param_name);

// Per-group trainability. Stage 1 moves only the projector and the visual
// compressor; stage 2 moves everything (the synthetic encoder has no
// parameters, so there is nothing to keep frozen on that side). fixed_dot
// query init pins the query embeddings regardless of stage.
struct FreezeMask {
  std::map<std::string, bool> groups;

  static FreezeMask stage1();
  static FreezeMask stage2();
  bool trainable(const std::string& param_name, const ModelParams& params) const;
};

struct ToyExample {
  std::uint64_t grid_seed = 0;
  std::string instruction;
  std::string answer;
};

// Synthetic captioning set: the answer names the quadrant of the feature
// grid with the highest mean activation, so the loss cannot be driven down
// while ignoring the visual input.
struct ToyDataset {
  std::vector<ToyExample> examples;
  int grid_h = 6;
  int grid_w = 6;
  int d_vis = 8;

  static ToyDataset generate(std::uint64_t seed, int count, int grid_h, int grid_w, int d_vis);
  VisualGrid grid_of(const ToyExample& ex) const;
};

// Answer-position cross entropy: logit row p-1 predicts the token at p, for
// every position in the answer segments.
Tensor answer_loss(const Tensor& logits, const MixedSequence& seq, int vocab_size);

// Adam (beta1 0.9, beta2 0.999, eps 1e-8, no weight decay) over the
// unfrozen groups; full-batch steps over the dataset; returns the per-step
// mean answer cross entropy.
std::vector<double> train_stage(ModelParams& params, const ToyDataset& data,
                                const FreezeMask& mask, int steps, double lr);

// Greedy-decode accuracy against the dataset's answer strings.
double eval_accuracy(const ModelParams& params, const ToyDataset& data, int max_new = 8);

// FNV-1a over the value bytes of every parameter (optionally one group).
std::uint64_t params_checksum(const ModelParams& params, const std::string& group = "");

std::vector<int> answer_token_ids(const std::string& answer, int vocab_size);

void write_loss_csv(const std::string& path, const std::vector<double>& losses);

}  // namespace sloth

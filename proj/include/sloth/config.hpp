#pragma once

#include <cstdint>
#include <string>

#include "sloth/cost.hpp"
#include "sloth/model.hpp"

namespace sloth {

// Toy model profile and optimization settings used by the train/ablate
// commands. Kept apart from ModelConfig so the demo-scale layout and the
// trainable toy stay independently configurable.
struct TrainSettings {
  int steps_stage1 = 40;
  int steps_stage2 = 300;
  double lr_stage1 = 3e-3;
  double lr_stage2 = 3e-3;
  std::uint64_t dataset_seed = 7;
  int train_examples = 8;
  int eval_examples = 8;
  int ablate_steps = 25;
  int max_new = 8;
  int n_layers = 12;
  int d_model = 32;
  int n_heads = 2;
  int d_ff = 64;
  int grid_h = 6;
  int grid_w = 6;
  int d_vis = 8;
};

struct RunConfig {
  ModelConfig model;  // fully-defaulted: s=3, n=9, k=8, d_e=576, fusion=add
  TrainSettings train;
  CostScenario cost;
};

RunConfig default_run_config();

// Strict parsing: unknown keys anywhere fail with the offending path before
// any computation runs.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Train-profile model derived from a run config: toy dimensions from the
// train section, compression/query settings from the model section.
ModelConfig toy_train_config(const RunConfig& rc);

}  // namespace sloth

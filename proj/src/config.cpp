#include "sloth/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sloth {

using nlohmann::json;

RunConfig default_run_config() { return RunConfig{}; }

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& path) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key: " + path + key);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for ") + key + ": " + e.what());
  }
}

void parse_model(const json& j, ModelConfig& m) {
  reject_unknown(j,
                 {"n_layers", "d_model", "n_heads", "d_ff", "vocab_size", "d_vis", "grid_h",
                  "grid_w", "max_seq", "seed", "hd"},
                 "model.");
  read_field(j, "n_layers", m.n_layers);
  read_field(j, "d_model", m.d_model);
  read_field(j, "n_heads", m.n_heads);
  read_field(j, "d_ff", m.d_ff);
  read_field(j, "vocab_size", m.vocab_size);
  read_field(j, "d_vis", m.d_vis);
  read_field(j, "grid_h", m.grid_h);
  read_field(j, "grid_w", m.grid_w);
  read_field(j, "max_seq", m.max_seq);
  read_field(j, "seed", m.seed);
  read_field(j, "hd", m.hd);
}

void parse_compressor(const json& j, ModelConfig& m) {
  reject_unknown(j, {"kind", "s", "hidden_dim"}, "compressor.");
  if (j.contains("kind")) m.compressor = compressor_kind_from(j.at("kind").get<std::string>());
  read_field(j, "s", m.s);
  read_field(j, "hidden_dim", m.sap_hidden);
}

void parse_embq(const json& j, ModelConfig& m) {
  reject_unknown(j,
                 {"n_queries", "dim", "n_layers", "insertion_layer", "fusion", "query_init",
                  "hd_all_tiles"},
                 "embq.");
  read_field(j, "n_queries", m.n_queries);
  read_field(j, "dim", m.embq_dim);
  read_field(j, "n_layers", m.embq_n_layers);
  if (j.contains("insertion_layer")) {
    const json& ins = j.at("insertion_layer");
    m.embq_insertion.clear();
    if (ins.is_array()) {
      for (const json& v : ins) m.embq_insertion.push_back(v.get<int>());
    } else if (ins.is_number_integer()) {
      m.embq_insertion.push_back(ins.get<int>());
    } else {
      throw ConfigError("embq.insertion_layer must be an integer or an array of integers");
    }
    if (m.embq_insertion.empty()) throw ConfigError("embq.insertion_layer must not be empty");
  }
  if (j.contains("fusion")) m.fusion = fusion_from(j.at("fusion").get<std::string>());
  if (j.contains("query_init")) m.query_init = query_init_from(j.at("query_init").get<std::string>());
  read_field(j, "hd_all_tiles", m.hd_embq_all_tiles);
}

void parse_train(const json& j, TrainSettings& t) {
  reject_unknown(j,
                 {"steps_stage1", "steps_stage2", "lr_stage1", "lr_stage2", "dataset_seed",
                  "train_examples", "eval_examples", "ablate_steps", "max_new", "n_layers",
                  "d_model", "n_heads", "d_ff", "grid_h", "grid_w", "d_vis"},
                 "train.");
  read_field(j, "steps_stage1", t.steps_stage1);
  read_field(j, "steps_stage2", t.steps_stage2);
  read_field(j, "lr_stage1", t.lr_stage1);
  read_field(j, "lr_stage2", t.lr_stage2);
  read_field(j, "dataset_seed", t.dataset_seed);
  read_field(j, "train_examples", t.train_examples);
  read_field(j, "eval_examples", t.eval_examples);
  read_field(j, "ablate_steps", t.ablate_steps);
  read_field(j, "max_new", t.max_new);
  read_field(j, "n_layers", t.n_layers);
  read_field(j, "d_model", t.d_model);
  read_field(j, "n_heads", t.n_heads);
  read_field(j, "d_ff", t.d_ff);
  read_field(j, "grid_h", t.grid_h);
  read_field(j, "grid_w", t.grid_w);
  read_field(j, "d_vis", t.d_vis);
}

void parse_cost(const json& j, CostScenario& c) {
  reject_unknown(j, {"benchmark", "text_len"}, "cost.");
  read_field(j, "benchmark", c.benchmark);
  read_field(j, "text_len", c.text_len);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown(j, {"model", "compressor", "embq", "train", "cost"}, "");

  RunConfig rc;
  if (j.contains("model")) parse_model(j.at("model"), rc.model);
  if (j.contains("compressor")) parse_compressor(j.at("compressor"), rc.model);
  if (j.contains("embq")) parse_embq(j.at("embq"), rc.model);
  if (j.contains("train")) parse_train(j.at("train"), rc.train);
  if (j.contains("cost")) parse_cost(j.at("cost"), rc.cost);
  rc.model.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

ModelConfig toy_train_config(const RunConfig& rc) {
  ModelConfig m = rc.model;
  m.n_layers = rc.train.n_layers;
  m.d_model = rc.train.d_model;
  m.n_heads = rc.train.n_heads;
  m.d_ff = rc.train.d_ff;
  m.grid_h = rc.train.grid_h;
  m.grid_w = rc.train.grid_w;
  m.d_vis = rc.train.d_vis;
  m.hd = false;
  m.validate();
  return m;
}

}  // namespace sloth

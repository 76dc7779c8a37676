#include "mergenet/presets.hpp"

#include "mergenet/errors.hpp"

namespace mergenet {

namespace {

// Shared Gaussian-mixture task; the source sees ten times the target's data.
DatasetConfig mixture(std::size_t train_size) {
  DatasetConfig d;
  d.kind = DatasetKind::synthetic;
  d.classes = 10;
  d.input_dim = 32;
  d.components_per_class = 3;
  d.separation = 1.0;
  d.noise = 1.0;
  d.train_size = train_size;
  d.test_size = 2000;
  d.task_seed = 7;
  return d;
}

ModelConfig model(ModelKind kind, std::size_t train_size) {
  ModelConfig m;
  m.kind = kind;
  m.lr = 0.05;
  m.batch_size = 32;
  m.dataset = mixture(train_size);
  return m;
}

ExperimentConfig base(const std::string& name, AdapterKind kind) {
  ExperimentConfig c;
  c.name = name;
  c.seed = 1;
  c.total_steps = 600;
  c.eval_every = 100;
  c.source = model(ModelKind::mlp_large, 10000);
  c.target = model(ModelKind::mlp_small, 1000);
  c.plan.pairs = {{"head", "head"}};
  c.plan.t_cycle = 4;
  c.plan.directions = Direction::both;
  c.adapter.kind = kind;
  c.adapter.lr = 0.05;
  c.variant = adapter_kind_name(kind);
  return c;
}

ExperimentConfig with_variant(ExperimentConfig c, AdapterKind kind, const std::string& variant = {}) {
  c.adapter.kind = kind;
  c.variant = variant.empty() ? adapter_kind_name(kind) : variant;
  return c;
}

std::vector<std::uint64_t> seeds(std::size_t n) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(i);
  return out;
}

// Small 3x8x8 images drawn from the same mixture construction.
ModelConfig image_model(ModelKind kind, std::size_t train_size) {
  ModelConfig m = model(kind, train_size);
  m.dataset.input_dim = 3 * 8 * 8;
  m.input_shape = ImageShape{3, 8, 8};
  return m;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"smoke_transfer", "baselines",   "cross_structure", "self_transfer",
          "frozen_source",  "cross_layer", "tcycle_sweep",    "ablation_table7"};
}

Suite make_preset(const std::string& name) {
  Suite s;
  s.name = name;
  if (name == "smoke_transfer") {
    const ExperimentConfig c = base(name, AdapterKind::lpka_full);
    s.configs = {with_variant(c, AdapterKind::none, "vanilla"), c};
    s.seeds = seeds(5);
  } else if (name == "baselines") {
    const ExperimentConfig c = base(name, AdapterKind::lpka_full);
    s.configs = {with_variant(c, AdapterKind::none, "vanilla"), with_variant(c, AdapterKind::kd),
                 with_variant(c, AdapterKind::copy_share), with_variant(c, AdapterKind::mlp), c};
    s.seeds = seeds(2);
  } else if (name == "cross_structure") {
    ExperimentConfig c = base(name, AdapterKind::lpka_full);
    c.source = image_model(ModelKind::cnn_large, 4000);
    c.target = image_model(ModelKind::cnn_small, 1000);
    c.plan.pairs = {{"head", "conv2"}};
    c.total_steps = 200;
    c.eval_every = 50;
    s.configs = {with_variant(c, AdapterKind::none, "vanilla"), c};
    s.seeds = seeds(2);
  } else if (name == "self_transfer") {
    ExperimentConfig c = base(name, AdapterKind::lpka_full);
    c.source.reset();
    c.plan.pairs = {{"head", "fc2"}};
    c.plan.directions = Direction::l2s;
    s.configs = {with_variant(c, AdapterKind::none, "vanilla"), c};
    s.seeds = seeds(2);
  } else if (name == "frozen_source") {
    ExperimentConfig c = base(name, AdapterKind::lpka_full);
    c.source->pretrain_steps = 400;
    c.plan.frozen_source = true;
    c.plan.directions = Direction::l2s;
    s.configs = {with_variant(c, AdapterKind::none, "vanilla"), c};
    s.seeds = seeds(2);
  } else if (name == "cross_layer") {
    ExperimentConfig c = base(name, AdapterKind::lpka_full);
    c.plan.pairs = {{"fc3", "fc2"}};
    c.variant = "fc3->fc2";
    ExperimentConfig heads = c;
    heads.plan.pairs = {{"head", "head"}};
    heads.variant = "head->head";
    ExperimentConfig mixed = c;
    mixed.plan.pairs = {{"fc2", "fc1"}};
    mixed.variant = "fc2->fc1";
    s.configs = {with_variant(c, AdapterKind::none, "vanilla"), heads, c, mixed};
    s.seeds = seeds(2);
  } else if (name == "tcycle_sweep") {
    for (std::size_t t : {1, 2, 4, 8, 16}) {
      ExperimentConfig c = base(name, AdapterKind::lpka_full);
      c.plan.t_cycle = t;
      c.variant = "t_cycle=" + std::to_string(t);
      s.configs.push_back(c);
    }
    s.seeds = seeds(1);
  } else if (name == "ablation_table7") {
    const ExperimentConfig c = base(name, AdapterKind::lpka_full);
    s.configs = {with_variant(c, AdapterKind::mlp), with_variant(c, AdapterKind::lpka_row_only),
                 with_variant(c, AdapterKind::lpka_avg), c};
    s.seeds = seeds(2);
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("preset: unknown name \"" + name + "\"; expected one of " + known);
  }
  return s;
}

}  // namespace mergenet

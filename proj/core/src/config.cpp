#include "mergenet/config.hpp"

#include <concepts>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "mergenet/errors.hpp"
#include "mergenet/rng.hpp"

namespace mergenet {

using nlohmann::json;

const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::cifar100: return "cifar100";
  }
  return "?";
}

namespace {

DatasetKind parse_dataset_kind(const std::string& s, const std::string& key) {
  for (auto k : {DatasetKind::synthetic, DatasetKind::cifar10, DatasetKind::cifar100}) {
    if (s == dataset_kind_name(k)) return k;
  }
  throw ConfigError(key + ": expected one of synthetic, cifar10, cifar100; got \"" + s + "\"");
}

// Reads the keys of one JSON object and rejects whatever it did not read.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string& k) const { return obj_.contains(k); }

  const json* get(const std::string& k) {
    seen_.insert(k);
    auto it = obj_.find(k);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <std::unsigned_integral U>
  void read(const std::string& k, U& out) {
    if (const json* v = get(k)) {
      if (!v->is_number_unsigned()) throw ConfigError(key(k) + ": expected a non-negative integer");
      out = v->get<U>();
    }
  }
  void read(const std::string& k, double& out) {
    if (const json* v = get(k)) {
      if (!v->is_number()) throw ConfigError(key(k) + ": expected a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& k, bool& out) {
    if (const json* v = get(k)) {
      if (!v->is_boolean()) throw ConfigError(key(k) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& k, std::string& out) {
    if (const json* v = get(k)) {
      if (!v->is_string()) throw ConfigError(key(k) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key(it.key()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

DatasetConfig read_dataset(const json& j, const std::string& path) {
  Reader r(j, path);
  DatasetConfig d;
  std::string kind = dataset_kind_name(d.kind);
  r.read("kind", kind);
  d.kind = parse_dataset_kind(kind, r.key("kind"));
  r.read("classes", d.classes);
  r.read("input_dim", d.input_dim);
  r.read("components_per_class", d.components_per_class);
  r.read("separation", d.separation);
  r.read("noise", d.noise);
  r.read("signal_dim", d.signal_dim);
  r.read("train_size", d.train_size);
  r.read("test_size", d.test_size);
  r.read("task_seed", d.task_seed);
  r.read("train_path", d.train_path);
  r.read("test_path", d.test_path);
  r.read("train_limit", d.train_limit);
  r.read("test_limit", d.test_limit);
  r.read("standardize", d.standardize);
  r.finish();
  if (d.kind == DatasetKind::cifar10) d.classes = 10;
  if (d.kind == DatasetKind::cifar100) d.classes = 100;
  if (d.kind != DatasetKind::synthetic) d.input_dim = 3 * 32 * 32;
  return d;
}

ModelConfig read_model(const json& j, const std::string& path) {
  Reader r(j, path);
  ModelConfig m;
  std::string kind = model_kind_name(m.kind);
  r.read("kind", kind);
  try {
    m.kind = parse_model_kind(kind);
  } catch (const Error&) {
    throw ConfigError(r.key("kind") + ": expected one of mlp_small, mlp_large, cnn_small, cnn_large; got \"" + kind + "\"");
  }
  r.read("lr", m.lr);
  r.read("batch_size", m.batch_size);
  r.read("freq_ratio", m.freq_ratio);
  r.read("pretrain_steps", m.pretrain_steps);
  if (const json* v = r.get("input_shape")) {
    if (!v->is_array() || v->size() != 3) throw ConfigError(r.key("input_shape") + ": expected [channels, height, width]");
    std::size_t dims[3];
    for (std::size_t i = 0; i < 3; ++i) {
      const json& e = (*v)[i];
      if (!e.is_number_integer() || e.get<long long>() < 1) {
        throw ConfigError(r.key("input_shape") + ": expected positive integers");
      }
      dims[i] = e.get<std::size_t>();
    }
    m.input_shape = ImageShape{dims[0], dims[1], dims[2]};
  }
  if (const json* v = r.get("dataset")) m.dataset = read_dataset(*v, r.key("dataset"));
  r.finish();
  if (!m.input_shape && is_cnn(m.kind) && m.dataset.kind != DatasetKind::synthetic) m.input_shape = ImageShape{3, 32, 32};
  return m;
}

PlanConfig read_plan(const json& j, const std::string& path) {
  Reader r(j, path);
  PlanConfig p;
  if (const json* v = r.get("pairs")) {
    if (!v->is_array()) throw ConfigError(r.key("pairs") + ": expected a list of {\"source\", \"target\"} objects");
    for (std::size_t i = 0; i < v->size(); ++i) {
      Reader e((*v)[i], r.key("pairs") + "[" + std::to_string(i) + "]");
      SlotPair pair;
      e.read("source", pair.source_slot);
      e.read("target", pair.target_slot);
      e.finish();
      if (pair.source_slot.empty() || pair.target_slot.empty()) {
        throw ConfigError(e.key("source") + ": both source and target slot names are required");
      }
      p.pairs.push_back(pair);
    }
  }
  r.read("t_cycle", p.t_cycle);
  std::string dirs = direction_name(p.directions);
  r.read("directions", dirs);
  try {
    p.directions = parse_direction(dirs);
  } catch (const Error&) {
    throw ConfigError(r.key("directions") + ": expected l2s, s2l or both; got \"" + dirs + "\"");
  }
  r.read("frozen_source", p.frozen_source);
  r.read("literal_t0", p.literal_t0);
  r.finish();
  return p;
}

AdapterConfig read_adapter(const json& j, const std::string& path) {
  Reader r(j, path);
  AdapterConfig a;
  std::string kind = adapter_kind_name(a.kind);
  r.read("kind", kind);
  a.kind = parse_adapter_kind(kind);
  r.read("r", a.r);
  r.read("d", a.d);
  r.read("layers", a.layers);
  r.read("omega_trainable", a.omega_trainable);
  r.read("residual", a.residual);
  r.read("lr", a.lr);
  r.read("kd_temperature", a.kd_temperature);
  r.read("kd_alpha", a.kd_alpha);
  r.finish();
  return a;
}

ExperimentConfig read_experiment(const json& j, const std::string& path) {
  Reader r(j, path);
  ExperimentConfig c;
  r.read("name", c.name);
  r.read("variant", c.variant);
  r.read("seed", c.seed);
  r.read("total_steps", c.total_steps);
  r.read("eval_every", c.eval_every);
  r.read("output_dir", c.output_dir);
  const json* models = r.get("models");
  if (models == nullptr) throw ConfigError(r.key("models") + ": required");
  Reader mr(*models, r.key("models"));
  if (const json* v = mr.get("source")) c.source = read_model(*v, mr.key("source"));
  const json* target = mr.get("target");
  if (target == nullptr) throw ConfigError(mr.key("target") + ": required");
  c.target = read_model(*target, mr.key("target"));
  mr.finish();
  if (const json* v = r.get("plan")) c.plan = read_plan(*v, r.key("plan"));
  if (const json* v = r.get("adapter")) c.adapter = read_adapter(*v, r.key("adapter"));
  r.finish();
  if (c.variant.empty()) c.variant = adapter_kind_name(c.adapter.kind);
  validate_config(c);
  return c;
}

json dataset_json(const DatasetConfig& d) {
  json j;
  j["kind"] = dataset_kind_name(d.kind);
  j["classes"] = d.classes;
  j["input_dim"] = d.input_dim;
  j["components_per_class"] = d.components_per_class;
  j["separation"] = d.separation;
  j["noise"] = d.noise;
  j["signal_dim"] = d.signal_dim;
  j["train_size"] = d.train_size;
  j["test_size"] = d.test_size;
  j["task_seed"] = d.task_seed;
  j["train_path"] = d.train_path;
  j["test_path"] = d.test_path;
  j["train_limit"] = d.train_limit;
  j["test_limit"] = d.test_limit;
  j["standardize"] = d.standardize;
  return j;
}

json model_json(const ModelConfig& m) {
  json j;
  j["kind"] = model_kind_name(m.kind);
  j["lr"] = m.lr;
  j["batch_size"] = m.batch_size;
  j["freq_ratio"] = m.freq_ratio;
  j["pretrain_steps"] = m.pretrain_steps;
  if (m.input_shape) j["input_shape"] = {m.input_shape->channels, m.input_shape->height, m.input_shape->width};
  j["dataset"] = dataset_json(m.dataset);
  return j;
}

json experiment_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["variant"] = c.variant;
  j["seed"] = c.seed;
  j["total_steps"] = c.total_steps;
  j["eval_every"] = c.eval_every;
  j["output_dir"] = c.output_dir;
  json models;
  if (c.source) models["source"] = model_json(*c.source);
  models["target"] = model_json(c.target);
  j["models"] = models;
  json pairs = json::array();
  for (const auto& p : c.plan.pairs) pairs.push_back({{"source", p.source_slot}, {"target", p.target_slot}});
  j["plan"] = {{"pairs", pairs},
               {"t_cycle", c.plan.t_cycle},
               {"directions", direction_name(c.plan.directions)},
               {"frozen_source", c.plan.frozen_source},
               {"literal_t0", c.plan.literal_t0}};
  j["adapter"] = {{"kind", adapter_kind_name(c.adapter.kind)},
                  {"r", c.adapter.r},
                  {"d", c.adapter.d},
                  {"layers", c.adapter.layers},
                  {"omega_trainable", c.adapter.omega_trainable},
                  {"residual", c.adapter.residual},
                  {"lr", c.adapter.lr},
                  {"kd_temperature", c.adapter.kd_temperature},
                  {"kd_alpha", c.adapter.kd_alpha}};
  return j;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
}

void validate_model(const ModelConfig& m, const std::string& path) {
  if (m.batch_size < 1) throw ConfigError(path + ".batch_size: must be >= 1");
  if (m.freq_ratio < 1) throw ConfigError(path + ".freq_ratio: must be >= 1");
  if (!(m.lr >= 0)) throw ConfigError(path + ".lr: must be >= 0");
  const DatasetConfig& d = m.dataset;
  const std::string dp = path + ".dataset";
  if (d.kind == DatasetKind::synthetic) {
    if (d.classes < 2) throw ConfigError(dp + ".classes: must be >= 2");
    if (d.input_dim < 1) throw ConfigError(dp + ".input_dim: must be >= 1");
    if (d.components_per_class < 1) throw ConfigError(dp + ".components_per_class: must be >= 1");
    if (d.train_size < m.batch_size) throw ConfigError(dp + ".train_size: must be >= " + path + ".batch_size");
    if (d.signal_dim > d.input_dim) throw ConfigError(dp + ".signal_dim: must be <= input_dim");
    if (d.test_size < 1) throw ConfigError(dp + ".test_size: must be >= 1");
    if (!(d.noise >= 0) || !(d.separation >= 0)) throw ConfigError(dp + ".noise: noise and separation must be >= 0");
  } else {
    if (d.train_path.empty()) throw ConfigError(dp + ".train_path: required for " + dataset_kind_name(d.kind));
    if (d.test_path.empty()) throw ConfigError(dp + ".test_path: required for " + dataset_kind_name(d.kind));
  }
  if (is_cnn(m.kind)) {
    if (!m.input_shape) throw ConfigError(path + ".input_shape: required for " + model_kind_name(m.kind) + " on synthetic data");
    if (m.input_shape->numel() != d.input_dim) {
      throw ConfigError(path + ".input_shape: channels*height*width must equal dataset.input_dim (" +
                        std::to_string(d.input_dim) + ")");
    }
  }
}

}  // namespace

void validate_config(const ExperimentConfig& c) {
  if (c.total_steps < 1) throw ConfigError("total_steps: must be >= 1");
  if (c.plan.t_cycle < 1) throw ConfigError("plan.t_cycle: must be >= 1");
  if (c.adapter.r < 1) throw ConfigError("adapter.r: must be >= 1");
  if (c.adapter.d < 1) throw ConfigError("adapter.d: must be >= 1");
  if (c.adapter.layers < 1) throw ConfigError("adapter.layers: must be >= 1");
  if (!(c.adapter.lr >= 0)) throw ConfigError("adapter.lr: must be >= 0");
  if (!(c.adapter.kd_temperature > 0)) throw ConfigError("adapter.kd_temperature: must be > 0");
  if (!(c.adapter.kd_alpha >= 0 && c.adapter.kd_alpha <= 1)) throw ConfigError("adapter.kd_alpha: must be in [0, 1]");
  if (c.name.empty() || c.name.find_first_of(" \t\n,/") != std::string::npos) {
    throw ConfigError("name: must be non-empty without spaces, commas or slashes");
  }
  if (c.variant.find_first_of("\n,") != std::string::npos) throw ConfigError("variant: must not contain commas");
  validate_model(c.target, "models.target");
  if (c.source) validate_model(*c.source, "models.source");

  if (c.self_transfer()) {
    if (c.plan.frozen_source) throw ConfigError("plan.frozen_source: needs a separate source model");
    if (c.adapter.kind == AdapterKind::kd) throw ConfigError("adapter.kind: kd needs a source model");
  }
  if (c.plan.frozen_source && c.plan.directions != Direction::l2s) {
    throw ConfigError("plan.directions: a frozen source only sends; expected \"l2s\"");
  }
  if (c.adapter.kind == AdapterKind::kd) {
    const DatasetConfig& s = c.source->dataset;
    const DatasetConfig& t = c.target.dataset;
    if (s.classes != t.classes) {
      throw ConfigError("adapter.kind: kd needs both models on the same labels; class counts are " +
                        std::to_string(s.classes) + " and " + std::to_string(t.classes));
    }
    if (s.input_dim != t.input_dim || s.kind != t.kind) {
      throw ConfigError("adapter.kind: kd needs both models on the same dataset");
    }
  }
}

ExperimentConfig parse_config(const std::string& text) { return read_experiment(parse_json(text), ""); }

std::string emit_config(const ExperimentConfig& cfg) { return experiment_json(cfg).dump(2) + "\n"; }

std::vector<ExperimentConfig> parse_suite(const std::string& text) {
  const json j = parse_json(text);
  if (j.is_object() && j.contains("experiments")) {
    Reader r(j, "");
    const json* list = r.get("experiments");
    r.finish();
    if (!list->is_array() || list->empty()) throw ConfigError("experiments: expected a non-empty list");
    std::vector<ExperimentConfig> out;
    for (std::size_t i = 0; i < list->size(); ++i) {
      out.push_back(read_experiment((*list)[i], "experiments[" + std::to_string(i) + "]"));
    }
    return out;
  }
  return {read_experiment(j, "")};
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = experiment_json(cfg);
  j.erase("seed");
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace mergenet

#include "mergenet/zoo.hpp"

#include <algorithm>
#include <cmath>

#include "mergenet/errors.hpp"
#include "mergenet/ops.hpp"
#include "mergenet/rng.hpp"

namespace mergenet {

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::mlp_small: return "mlp_small";
    case ModelKind::mlp_large: return "mlp_large";
    case ModelKind::cnn_small: return "cnn_small";
    case ModelKind::cnn_large: return "cnn_large";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  for (auto k : {ModelKind::mlp_small, ModelKind::mlp_large, ModelKind::cnn_small, ModelKind::cnn_large}) {
    if (s == model_kind_name(k)) return k;
  }
  throw ConfigError("model kind must be one of mlp_small, mlp_large, cnn_small, cnn_large; got '" + s + "'");
}

bool is_cnn(ModelKind k) { return k == ModelKind::cnn_small || k == ModelKind::cnn_large; }

namespace {

struct LayerPlan {
  std::string name;
  LayerType type;
  std::size_t out;
};

std::vector<LayerPlan> architecture(ModelKind kind) {
  switch (kind) {
    case ModelKind::mlp_small:
      return {{"fc1", LayerType::linear, 64}, {"fc2", LayerType::linear, 64}};
    case ModelKind::mlp_large:
      return {{"fc1", LayerType::linear, 256}, {"fc2", LayerType::linear, 256}, {"fc3", LayerType::linear, 128}};
    case ModelKind::cnn_small:
      return {{"conv1", LayerType::conv, 8}, {"conv2", LayerType::conv, 16}};
    case ModelKind::cnn_large:
      return {{"conv1", LayerType::conv, 16},
              {"conv2", LayerType::conv, 32},
              {"conv3", LayerType::conv, 32},
              {"conv4", LayerType::conv, 64}};
  }
  return {};
}

Tensor dense_weight(const Layer& l) {
  if (const auto* p = std::get_if<LowRankParam>(&l.weight)) return densify(*p);
  return std::get<Tensor>(l.weight);
}

// y = x * W^T, using the factors directly so the dense product is never formed.
Tensor apply_weight(const Tensor& x, const Layer& l) {
  if (const auto* p = std::get_if<LowRankParam>(&l.weight)) {
    return matmul(matmul(x, transpose(p->a)), transpose(p->b));
  }
  return matmul(x, transpose(std::get<Tensor>(l.weight)));
}

}  // namespace

Tensor ZooModel::forward(const Tensor& x) const {
  if (!x.is_matrix() || x.cols() != input_dim_) {
    throw ShapeError(std::string(model_kind_name(kind_)) + " expects rows of " + std::to_string(input_dim_) +
                     " features, got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.rows();
  Tensor h = x;
  if (is_cnn(kind_)) {
    MapGeometry geom{batch, image_.height, image_.width};
    h = to_channels_last(x, image_.channels, geom);
    for (const auto& l : layers_) {
      if (l.type != LayerType::conv) break;
      Tensor cols = im2col(h, l.in, geom, l.kh, l.kw, l.kh / 2);
      h = relu(add_row(apply_weight(cols, l), l.bias));
      if (l.pool_after) {
        h = avg_pool2(h, geom);
        geom.height /= 2;
        geom.width /= 2;
      }
    }
    h = global_avg_pool(h, geom);
    return add_row(apply_weight(h, layers_.back()), layers_.back().bias);
  }
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = relu(add_row(apply_weight(h, layers_[i]), layers_[i].bias));
  return add_row(apply_weight(h, layers_.back()), layers_.back().bias);
}

Layer& ZooModel::layer(const std::string& name) {
  for (auto& l : layers_)
    if (l.name == name) return l;
  throw ContractError(std::string(model_kind_name(kind_)) + " has no slot '" + name + "'");
}

const Layer& ZooModel::layer(const std::string& name) const { return const_cast<ZooModel*>(this)->layer(name); }

bool ZooModel::has_slot(const std::string& name) const {
  return std::any_of(layers_.begin(), layers_.end(), [&](const Layer& l) { return l.name == name; });
}

std::vector<std::string> ZooModel::weight_slots() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) out.push_back(l.name);
  return out;
}

std::vector<std::string> ZooModel::all_slots() const {
  std::vector<std::string> out;
  for (const auto& l : layers_) {
    out.push_back(l.name);
    out.push_back(l.name + ".bias");
  }
  return out;
}

bool ZooModel::is_factorized(const std::string& slot) const {
  return std::holds_alternative<LowRankParam>(layer(slot).weight);
}

LowRankParam& ZooModel::factors(const std::string& slot) {
  auto& l = layer(slot);
  if (auto* p = std::get_if<LowRankParam>(&l.weight)) return *p;
  throw ContractError("slot '" + slot + "' is not factorized");
}

const LowRankParam& ZooModel::factors(const std::string& slot) const {
  return const_cast<ZooModel*>(this)->factors(slot);
}

Tensor ZooModel::weight_matrix(const std::string& slot) const { return dense_weight(layer(slot)); }

Reencoded ZooModel::factorize_slot(const std::string& slot, std::size_t rank, const SvdOptions& opts) {
  auto& l = layer(slot);
  if (std::holds_alternative<LowRankParam>(l.weight)) throw ContractError("slot '" + slot + "' is already factorized");
  auto enc = reencode_truncated_svd(std::get<Tensor>(l.weight), rank, opts, slot);
  enc.param.b.set_requires_grad(trainable_);
  enc.param.a.set_requires_grad(trainable_);
  l.weight = enc.param;
  return enc;
}

std::vector<Tensor> ZooModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    if (const auto* p = std::get_if<LowRankParam>(&l.weight)) {
      out.push_back(p->b);
      out.push_back(p->a);
    } else {
      out.push_back(std::get<Tensor>(l.weight));
    }
    out.push_back(l.bias);
  }
  return out;
}

ParamPartition ZooModel::partition() const {
  ParamPartition p;
  for (const auto& l : layers_) {
    if (std::holds_alternative<LowRankParam>(l.weight)) {
      p.transfer_slots.push_back(l.name);
    } else {
      p.frozen_or_local.push_back(l.name);
    }
    p.frozen_or_local.push_back(l.name + ".bias");
  }
  return p;
}

std::size_t ZooModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

void ZooModel::set_trainable(bool on) {
  trainable_ = on;
  for (auto& p : parameters()) p.set_requires_grad(on);
}

ZooModel ZooModel::clone() const {
  ZooModel copy = *this;
  for (auto& l : copy.layers_) {
    if (auto* p = std::get_if<LowRankParam>(&l.weight)) {
      *p = p->clone();
    } else {
      l.weight = std::get<Tensor>(l.weight).clone();
    }
    l.bias = l.bias.clone();
  }
  return copy;
}

std::vector<CheckpointEntry> ZooModel::checkpoint_entries() const {
  std::vector<CheckpointEntry> out;
  for (const auto& l : layers_) {
    if (const auto* p = std::get_if<LowRankParam>(&l.weight)) {
      out.push_back({l.name, LowRankParam(p->b.detach(), p->a.detach(), l.name)});
    } else {
      out.push_back({l.name, std::get<Tensor>(l.weight).detach()});
    }
    out.push_back({l.name + ".bias", l.bias.detach()});
  }
  return out;
}

ZooModel build_model(const ModelSpec& spec) {
  if (spec.classes < 2) throw ConfigError("classes must be >= 2");
  if (spec.input_dim == 0) throw ConfigError("input_dim must be positive");
  if (is_cnn(spec.kind) && spec.image.numel() != spec.input_dim) {
    throw ConfigError(std::string(model_kind_name(spec.kind)) + ": image shape " + std::to_string(spec.image.channels) +
                      "x" + std::to_string(spec.image.height) + "x" + std::to_string(spec.image.width) +
                      " does not match input_dim " + std::to_string(spec.input_dim));
  }

  ZooModel m;
  m.kind_ = spec.kind;
  m.classes_ = spec.classes;
  m.input_dim_ = spec.input_dim;
  m.image_ = spec.image;

  auto plan = architecture(spec.kind);
  plan.push_back({"head", LayerType::linear, spec.classes});
  for (const auto& s : spec.transfer_slots) {
    if (std::none_of(plan.begin(), plan.end(), [&](const LayerPlan& p) { return p.name == s; })) {
      throw ConfigError(std::string(model_kind_name(spec.kind)) + " has no slot '" + s + "'");
    }
  }

  std::size_t in = is_cnn(spec.kind) ? spec.image.channels : spec.input_dim;
  std::size_t h = spec.image.height, w = spec.image.width;
  for (const auto& p : plan) {
    Layer l;
    l.name = p.name;
    l.type = p.type;
    l.out = p.out;
    l.in = in;
    if (p.type == LayerType::conv) {
      l.kh = l.kw = 3;
      l.pool_after = h >= 2 && w >= 2 && h % 2 == 0 && w % 2 == 0;
      if (l.pool_after) {
        h /= 2;
        w /= 2;
      }
    }
    const std::size_t fan_in = l.in * l.kh * l.kw;
    // He-uniform for ReLU layers, LeCun-uniform for the head.
    const double bound = p.name == "head" ? 1.0 / std::sqrt(static_cast<double>(fan_in))
                                          : std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng = Rng::derive(spec.seed, fnv1a64(p.name));
    std::vector<Scalar> v(l.out * fan_in);
    for (auto& x : v) x = static_cast<Scalar>(rng.uniform(-bound, bound));
    Tensor dense({l.out, fan_in}, std::move(v), true);

    const bool factorize =
        std::find(spec.transfer_slots.begin(), spec.transfer_slots.end(), p.name) != spec.transfer_slots.end();
    if (factorize) {
      if (spec.rank == 0 || spec.rank > std::min(l.out, fan_in)) {
        throw ConfigError("rank " + std::to_string(spec.rank) + " too large for slot '" + p.name + "' (" +
                          std::to_string(l.out) + "x" + std::to_string(fan_in) + ")");
      }
      SvdOptions opts;
      opts.seed = spec.seed ^ fnv1a64(p.name + "/svd");
      auto enc = reencode_truncated_svd(dense, spec.rank, opts, p.name);
      // Truncation drops most of a random matrix's energy; rescale b so the
      // product starts at the dense initialisation's scale.
      const Scalar gain = std::sqrt(static_cast<Scalar>(std::min(l.out, fan_in)) / static_cast<Scalar>(spec.rank));
      auto b = scale(enc.param.b, gain).detach();
      b.set_requires_grad(true);
      auto a = enc.param.a.detach();
      a.set_requires_grad(true);
      l.weight = LowRankParam(b, a, p.name);
    } else {
      l.weight = dense;
    }
    l.bias = Tensor::zeros({1, l.out}, true);
    m.layers_.push_back(std::move(l));
    in = p.out;
  }
  return m;
}

}  // namespace mergenet

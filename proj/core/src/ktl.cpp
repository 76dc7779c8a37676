#include "mergenet/ktl.hpp"

#include "mergenet/errors.hpp"

namespace mergenet {

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::l2s: return "l2s";
    case Direction::s2l: return "s2l";
    case Direction::both: return "both";
  }
  return "?";
}

Direction parse_direction(const std::string& s) {
  if (s == "l2s") return Direction::l2s;
  if (s == "s2l") return Direction::s2l;
  if (s == "both") return Direction::both;
  throw ConfigError("direction must be one of l2s, s2l, both; got '" + s + "'");
}

bool includes(Direction set, Direction single) { return set == Direction::both || set == single; }

KtlStack::KtlStack(std::size_t depth, const KtlDims& dims, LpkaVariant variant, Direction available, Rng& rng,
                   bool residual)
    : dims_(dims), variant_(variant), available_(available) {
  if (depth == 0) throw ContractError("KTL stack needs at least one layer");
  for (std::size_t i = 0; i < depth; ++i) {
    KtlLayer layer;
    if (includes(available, Direction::l2s)) {
      layer.to_small.emplace(LpkaDims{dims.rank, dims.small_cols, dims.large_cols, dims.attn_dim}, variant, rng,
                             residual);
    }
    if (includes(available, Direction::s2l)) {
      layer.to_large.emplace(LpkaDims{dims.rank, dims.large_cols, dims.small_cols, dims.attn_dim}, variant, rng,
                             residual);
    }
    layers_.push_back(std::move(layer));
  }
}

std::vector<Tensor> KtlStack::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    for (const auto* a : {&l.to_small, &l.to_large}) {
      if (!*a) continue;
      auto p = (*a)->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
  }
  return out;
}

std::size_t KtlStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

void KtlStack::set_omega_trainable(bool on) {
  for (auto& l : layers_) {
    if (l.to_small) l.to_small->set_omega_trainable(on);
    if (l.to_large) l.to_large->set_omega_trainable(on);
  }
}

KtlStack KtlStack::clone() const {
  KtlStack copy = *this;
  for (auto& l : copy.layers_) {
    if (l.to_small) l.to_small = l.to_small->clone();
    if (l.to_large) l.to_large = l.to_large->clone();
  }
  return copy;
}

std::vector<CheckpointEntry> KtlStack::checkpoint_entries() const {
  std::vector<CheckpointEntry> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto emit = [&](const std::optional<LpkaAdapter>& a, const char* dir) {
      if (!a) return;
      const std::string layer = "adapter/" + std::to_string(i) + "." + dir + "/";
      for (const auto& w : a->combos()) {
        const std::string base = layer + combo_name(w.combo) + "/";
        out.push_back({base + "q", w.wq.detach()});
        out.push_back({base + "k", w.wk.detach()});
        out.push_back({base + "v", w.wv.detach()});
        out.push_back({base + "o", w.wo.detach()});
      }
      const auto om = a->omega_values();
      out.push_back({layer + "all/omega", Tensor({1, 4}, {om[0], om[1], om[2], om[3]})});
    };
    emit(layers_[i].to_small, "l2s");
    emit(layers_[i].to_large, "s2l");
  }
  return out;
}

std::pair<Tensor, Tensor> ktl_apply(const KtlStack& stack, const Tensor& a_l, const Tensor& a_s, Direction directions) {
  const auto& d = stack.dims();
  if (!a_l.is_matrix() || !a_s.is_matrix() || a_l.rows() != d.rank || a_s.rows() != d.rank ||
      a_l.cols() != d.large_cols || a_s.cols() != d.small_cols) {
    throw ContractError("ktl_apply: stack bound to r=" + std::to_string(d.rank) + ", M=" + std::to_string(d.large_cols) +
                        ", m=" + std::to_string(d.small_cols) + " but got a_l " + shape_str(a_l.shape()) + ", a_s " +
                        shape_str(a_s.shape()));
  }
  if (includes(directions, Direction::l2s) && !includes(stack.available(), Direction::l2s)) {
    throw ContractError("ktl_apply: stack has no l2s adapters");
  }
  if (includes(directions, Direction::s2l) && !includes(stack.available(), Direction::s2l)) {
    throw ContractError("ktl_apply: stack has no s2l adapters");
  }
  Tensor cur_l = a_l, cur_s = a_s;
  for (const auto& layer : stack.layers()) {
    Tensor next_l = cur_l, next_s = cur_s;
    if (includes(directions, Direction::l2s)) next_s = lpka_forward(*layer.to_small, cur_s, cur_l);
    if (includes(directions, Direction::s2l)) next_l = lpka_forward(*layer.to_large, cur_l, cur_s);
    cur_l = next_l;
    cur_s = next_s;
  }
  return {cur_l, cur_s};
}

}  // namespace mergenet

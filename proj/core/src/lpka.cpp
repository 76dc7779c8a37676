#include "mergenet/lpka.hpp"

#include <cmath>

#include "mergenet/errors.hpp"
#include "mergenet/ops.hpp"

namespace mergenet {

const char* combo_name(AttnCombo c) {
  switch (c) {
    case AttnCombo::RR: return "RR";
    case AttnCombo::RL: return "RL";
    case AttnCombo::LR: return "LR";
    case AttnCombo::LL: return "LL";
  }
  return "?";
}

const char* variant_name(LpkaVariant v) {
  switch (v) {
    case LpkaVariant::full: return "full";
    case LpkaVariant::row_only: return "row_only";
    case LpkaVariant::avg_attn: return "avg_attn";
  }
  return "?";
}

namespace {

bool query_is_rows(AttnCombo c) { return c == AttnCombo::RR || c == AttnCombo::RL; }
bool kv_is_rows(AttnCombo c) { return c == AttnCombo::RR || c == AttnCombo::LR; }

Tensor init_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<Scalar> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<Scalar>(rng.uniform(-bound, bound));
  return Tensor({fan_in, fan_out}, std::move(v), true);
}

}  // namespace

LpkaAdapter::LpkaAdapter(const LpkaDims& dims, LpkaVariant variant, Rng& rng, bool residual)
    : dims_(dims), variant_(variant), residual_(residual) {
  if (dims.rank == 0 || dims.target_cols == 0 || dims.source_cols == 0 || dims.attn_dim == 0) {
    throw ContractError("LPKA dimensions must be positive");
  }
  const auto r = dims.rank, m = dims.target_cols, big_m = dims.source_cols, d = dims.attn_dim;
  for (auto c : kAllCombos) {
    if (variant == LpkaVariant::row_only && c != AttnCombo::RR) continue;
    const std::size_t q_dim = query_is_rows(c) ? m : r;
    const std::size_t kv_dim = kv_is_rows(c) ? big_m : r;
    const std::size_t out_len = query_is_rows(c) ? m : r;
    ComboWeights w;
    w.combo = c;
    w.wq = init_uniform(q_dim, d, rng);
    w.wk = init_uniform(kv_dim, d, rng);
    w.wv = init_uniform(kv_dim, d, rng);
    w.wo = init_uniform(d, out_len, rng);
    combos_.push_back(std::move(w));
  }
  for (auto& o : omega_) o = Tensor::scalar(Scalar(0.25), true);
  set_omega_trainable(variant != LpkaVariant::avg_attn);
}

bool LpkaAdapter::has_combo(AttnCombo c) const {
  for (const auto& w : combos_)
    if (w.combo == c) return true;
  return false;
}

ComboWeights& LpkaAdapter::combo(AttnCombo c) {
  for (auto& w : combos_)
    if (w.combo == c) return w;
  throw ContractError(std::string("adapter has no ") + combo_name(c) + " projections");
}

const ComboWeights& LpkaAdapter::combo(AttnCombo c) const {
  return const_cast<LpkaAdapter*>(this)->combo(c);
}

std::array<Scalar, 4> LpkaAdapter::omega_values() const {
  return {omega_[0][0], omega_[1][0], omega_[2][0], omega_[3][0]};
}

void LpkaAdapter::set_omega_trainable(bool on) {
  omega_trainable_ = on;
  for (auto& o : omega_) o.set_requires_grad(on);
}

std::vector<Tensor> LpkaAdapter::parameters() const {
  std::vector<Tensor> out;
  for (const auto& w : combos_) {
    out.push_back(w.wq);
    out.push_back(w.wk);
    out.push_back(w.wv);
    out.push_back(w.wo);
  }
  if (omega_trainable_) {
    if (variant_ == LpkaVariant::row_only) {
      out.push_back(omega_[0]);
    } else if (variant_ == LpkaVariant::full) {
      for (const auto& o : omega_) out.push_back(o);
    }
  }
  return out;
}

std::size_t LpkaAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

LpkaAdapter LpkaAdapter::clone() const {
  LpkaAdapter copy = *this;
  for (auto& w : copy.combos_) {
    w.wq = w.wq.clone();
    w.wk = w.wk.clone();
    w.wv = w.wv.clone();
    w.wo = w.wo.clone();
  }
  for (auto& o : copy.omega_) o = o.clone();
  return copy;
}

Tensor lpka_forward(const LpkaAdapter& adapter, const Tensor& a_target, const Tensor& a_source, LpkaVariant variant,
                    LpkaTrace* trace) {
  if (!a_target.is_matrix() || !a_source.is_matrix()) throw ShapeError("lpka_forward: factors must be 2-D");
  if (a_target.rows() != a_source.rows()) {
    throw ContractError("lpka_forward: rank mismatch, target " + shape_str(a_target.shape()) + " vs source " +
                        shape_str(a_source.shape()));
  }
  const auto& dims = adapter.dims();
  if (a_target.rows() != dims.rank || a_target.cols() != dims.target_cols || a_source.cols() != dims.source_cols) {
    throw ContractError("lpka_forward: adapter bound to r=" + std::to_string(dims.rank) +
                        ", m=" + std::to_string(dims.target_cols) + ", M=" + std::to_string(dims.source_cols) +
                        " but got target " + shape_str(a_target.shape()) + ", source " + shape_str(a_source.shape()));
  }
  std::vector<AttnCombo> active;
  if (variant == LpkaVariant::row_only) {
    active = {AttnCombo::RR};
  } else {
    active.assign(kAllCombos.begin(), kAllCombos.end());
  }
  for (auto c : active) {
    if (!adapter.has_combo(c)) {
      throw ContractError(std::string("lpka_forward: variant ") + variant_name(variant) + " needs " + combo_name(c) +
                          " projections the adapter does not own");
    }
  }

  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(dims.attn_dim));
  const TokenSeq target_rows = flatten_rows(a_target);
  const TokenSeq target_cols = flatten_cols(a_target);
  const TokenSeq source_rows = flatten_rows(a_source);
  const TokenSeq source_cols = flatten_cols(a_source);

  Tensor result;
  bool first = true;
  for (auto c : active) {
    const auto& w = adapter.combo(c);
    const TokenSeq& q_tok = query_is_rows(c) ? target_rows : target_cols;
    const TokenSeq& kv_tok = kv_is_rows(c) ? source_rows : source_cols;
    Tensor q = matmul(q_tok, w.wq);
    Tensor k = matmul(kv_tok, w.wk);
    Tensor v = matmul(kv_tok, w.wv);
    Tensor attn = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
    if (trace) {
      trace->combos.push_back(c);
      trace->attention.push_back(attn.detach());
    }
    Tensor head = matmul(matmul(attn, v), w.wo);
    if (!query_is_rows(c)) head = transpose(head);

    Tensor term;
    switch (variant) {
      case LpkaVariant::full:
      case LpkaVariant::row_only:
        term = scale_by(adapter.omega()[static_cast<std::size_t>(c)], head);
        break;
      case LpkaVariant::avg_attn:
        term = scale(head, Scalar(0.25));
        break;
    }
    result = first ? term : add(result, term);
    first = false;
  }
  if (adapter.residual()) result = add(a_target, result);
  return result;
}

}  // namespace mergenet

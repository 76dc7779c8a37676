#ifndef MERGENET_TESTS_FIXTURES_HPP
#define MERGENET_TESTS_FIXTURES_HPP

#include <memory>
#include <vector>

#include "mergenet/grad_check.hpp"
#include "mergenet/transfer.hpp"
#include "oracles.hpp"

namespace mergenet::testing {

/// Every adapter parameter value, flattened in parameters() order.
inline std::vector<Scalar> flat_parameters(const PairAdapter& a) {
  std::vector<Scalar> out;
  for (const auto& p : a.parameters())
    for (Scalar x : p.data()) out.push_back(x);
  return out;
}

/// A tiny source/target pair whose fc1 slots are factorized at rank 2; the
/// fc1 a factors are 2 x input_dim, which keeps an attn_dim 1 LPKA adapter
/// under 50 parameters per direction.
struct TinyPair {
  ZooModel source;
  ZooModel target;
  std::vector<PairAdapter> adapters;
  TransferPlan plan;

  TinyPair(std::uint64_t seed, Direction dir, AdapterKind kind = AdapterKind::lpka_full) {
    ModelSpec s;
    s.kind = ModelKind::mlp_large;
    s.classes = 2;
    s.input_dim = 3;
    s.rank = 2;
    s.transfer_slots = {"fc1"};
    s.seed = seed;
    ModelSpec t = s;
    t.kind = ModelKind::mlp_small;
    t.input_dim = 2;
    t.seed = seed + 1000;
    source = build_model(s);
    target = build_model(t);
    plan.pairs = {{"fc1", "fc1"}};
    plan.directions = dir;
    AdapterOptions opts;
    opts.rank = 2;
    opts.attn_dim = 1;
    Rng rng = Rng::derive(seed, 7);
    adapters.push_back(PairAdapter::make(kind, plan.pairs[0], source, target, opts, dir, rng));
  }

  ModelPair models() { return {&source, &target}; }
};

/// Central-difference Jacobian of one event's regenerated output with
/// respect to the flattened adapter parameters; column-major by parameter.
inline std::vector<std::vector<Scalar>> fd_jacobian(PairAdapter& adapter, const TransferEvent& ev,
                                                    Scalar step = kGradCheckStep) {
  NoGradScope ng;
  std::vector<std::vector<Scalar>> cols;
  for (auto p : adapter.parameters()) {
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const Scalar orig = p[i];
      p[i] = orig + step;
      const Tensor up = adapter.generate_for(ev.source_input, ev.target_input, ev.generated_with, ev.direction);
      p[i] = orig - step;
      const Tensor down = adapter.generate_for(ev.source_input, ev.target_input, ev.generated_with, ev.direction);
      p[i] = orig;
      std::vector<Scalar> col(up.numel());
      for (std::size_t k = 0; k < col.size(); ++k) col[k] = (up[k] - down[k]) / (2 * step);
      cols.push_back(std::move(col));
    }
  }
  return cols;
}

/// Perturbs the receiving slot as a cycle of self-learning would.
inline void drift_receiver(TinyPair& p, const TransferEvent& ev, Rng& rng, double scale = 0.1) {
  ZooModel& m = ev.direction == Direction::l2s ? p.target : p.source;
  Tensor a = m.factors("fc1").a;
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += Scalar(scale * rng.normal());
}

/// Worst absolute gap between adapter_update and phi - eta * J^T delta.
inline double delta_rule_gap(std::uint64_t seed, Direction dir, Scalar eta = Scalar(0.1)) {
  TinyPair p(seed, dir);
  Rng rng = Rng::derive(seed, 99);
  const auto events = transfer_step(p.plan, p.models(), p.adapters, 4, dir);
  for (const auto& ev : events) drift_receiver(p, ev, rng);
  std::vector<Scalar> expected = flat_parameters(p.adapters[0]);
  for (const auto& ev : events) {
    const Tensor delta = adapter_delta(ev, p.models(), p.adapters[0]);
    const auto jac = fd_jacobian(p.adapters[0], ev);
    for (std::size_t k = 0; k < jac.size(); ++k) {
      Scalar g = 0;
      for (std::size_t i = 0; i < delta.numel(); ++i) g += jac[k][i] * delta[i];
      expected[k] -= eta * g;
    }
  }
  adapter_update(events, p.models(), p.adapters, eta);
  const auto got = flat_parameters(p.adapters[0]);
  double gap = 0;
  for (std::size_t k = 0; k < got.size(); ++k) gap = std::max(gap, double(std::abs(got[k] - expected[k])));
  return gap;
}

}  // namespace mergenet::testing

#endif  // MERGENET_TESTS_FIXTURES_HPP

#include <gtest/gtest.h>

#include <cmath>

#include "../common/fixtures.hpp"
#include "mergenet/checkpoint.hpp"
#include "mergenet/errors.hpp"
#include "mergenet/ops.hpp"

using namespace mergenet;
using namespace mergenet::testing;

TEST(Schedule, EquationExamples) {
  EXPECT_TRUE(should_transfer(4, 4, 1));
  EXPECT_FALSE(should_transfer(3, 4, 1));
  std::vector<std::size_t> events;
  for (std::size_t t = 1; t <= 100; ++t)
    if (should_transfer(t, 4, 2)) events.push_back(t);
  ASSERT_EQ(events.size(), 12u);
  EXPECT_EQ(events.front(), 8u);
  EXPECT_EQ(events.back(), 96u);
  EXPECT_THROW(should_transfer(0, 4, 1), ContractError);
  EXPECT_TRUE(should_transfer(0, 4, 1, true));
}

TEST(Schedule, CountEqualsFloorOverRandomTriples) {
  Rng rng(51);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t horizon = random_dim(rng, 0, 500), cycle = random_dim(rng, 1, 16), ratio = random_dim(rng, 1, 4);
    EXPECT_EQ(count_transfer_events(horizon, cycle, ratio), horizon / (cycle * ratio));
    // Counting from t = 0 adds the t = 0 event and drops t = horizon.
    const std::size_t literal = count_transfer_events(horizon, cycle, ratio, true);
    EXPECT_EQ(literal, horizon == 0 ? 0 : (horizon - 1) / (cycle * ratio) + 1);
  }
}

TEST(Plan, FrozenSourceCannotReceive) {
  TransferPlan plan;
  plan.frozen_source = true;
  plan.directions = Direction::both;
  EXPECT_THROW(plan.validate(), PlanError);
  plan.directions = Direction::l2s;
  EXPECT_NO_THROW(plan.validate());
  plan.t_cycle = 0;
  EXPECT_THROW(plan.validate(), PlanError);
}

TEST(TransferStep, ZeroPairsIsNoOp) {
  TinyPair p(1, Direction::both);
  TransferPlan empty;
  std::vector<PairAdapter> none;
  const std::string before = checkpoint_bytes(p.target.checkpoint_entries());
  EXPECT_TRUE(transfer_step(empty, p.models(), none, 4, Direction::both).empty());
  EXPECT_EQ(checkpoint_bytes(p.target.checkpoint_entries()), before);
}

TEST(TransferStep, BothDirectionsWriteAOnly) {
  TinyPair p(2, Direction::both);
  const Tensor src_b = p.source.factors("fc1").b.clone(), tgt_b = p.target.factors("fc1").b.clone();
  const Tensor src_a = p.source.factors("fc1").a.clone(), tgt_a = p.target.factors("fc1").a.clone();
  const auto events = transfer_step(p.plan, p.models(), p.adapters, 4, Direction::both);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_TRUE(bit_equal(p.source.factors("fc1").b, src_b));
  EXPECT_TRUE(bit_equal(p.target.factors("fc1").b, tgt_b));
  EXPECT_FALSE(bit_equal(p.source.factors("fc1").a, src_a));
  EXPECT_FALSE(bit_equal(p.target.factors("fc1").a, tgt_a));
  for (const auto& ev : events) {
    const ZooModel& m = ev.direction == Direction::l2s ? p.target : p.source;
    EXPECT_TRUE(bit_equal(m.factors("fc1").a, ev.generated));
    EXPECT_TRUE(bit_equal(ev.pre, ev.direction == Direction::l2s ? tgt_a : src_a));
  }
}

TEST(TransferStep, SingleTokenIdentityCopiesSourceValue) {
  ModelSpec s;
  s.kind = ModelKind::mlp_large;
  s.classes = 2;
  s.input_dim = 1;
  s.rank = 1;
  s.transfer_slots = {"fc1"};
  ZooModel source = build_model(s);
  s.kind = ModelKind::mlp_small;
  s.seed = 2;
  ZooModel target = build_model(s);
  TransferPlan plan;
  plan.pairs = {{"fc1", "fc1"}};
  plan.directions = Direction::l2s;
  AdapterOptions opts;
  opts.rank = 1;
  opts.attn_dim = 1;
  Rng rng(3);
  std::vector<PairAdapter> adapters{
      PairAdapter::make(AdapterKind::lpka_full, plan.pairs[0], source, target, opts, Direction::l2s, rng)};
  for (auto& w : adapters[0].ktl()->layers()[0].to_small->combos())
    for (Tensor* t : {&w.wq, &w.wk, &w.wv, &w.wo}) (*t)[0] = 1;
  transfer_step(plan, {&source, &target}, adapters, 4, Direction::l2s);
  EXPECT_NEAR(target.factors("fc1").a[0], source.factors("fc1").a[0], 1e-12);
}

TEST(TransferStep, FrozenSourceRejectsS2l) {
  TinyPair p(3, Direction::both);
  p.plan.frozen_source = true;
  EXPECT_THROW(transfer_step(p.plan, p.models(), p.adapters, 4, Direction::s2l), PlanError);
}

TEST(TransferStep, LpkaNeedsMatchingRanks) {
  ModelSpec s;
  s.kind = ModelKind::mlp_small;
  s.transfer_slots = {"head"};
  s.rank = 2;
  const ZooModel a = build_model(s);
  s.rank = 3;
  const ZooModel b = build_model(s);
  Rng rng(4);
  EXPECT_THROW(PairAdapter::make(AdapterKind::lpka_full, {"head", "head"}, a, b, {}, Direction::both, rng), ContractError);
  s.transfer_slots = {};
  const ZooModel dense = build_model(s);
  EXPECT_THROW(PairAdapter::make(AdapterKind::lpka_full, {"head", "head"}, a, dense, {}, Direction::both, rng),
               ContractError);
}

TEST(DeltaRule, ZeroDeltaLeavesAdapterUnchanged) {
  TinyPair p(5, Direction::both);
  const auto events = transfer_step(p.plan, p.models(), p.adapters, 4, Direction::both);
  const auto before = flat_parameters(p.adapters[0]);
  adapter_update(events, p.models(), p.adapters, Scalar(0.5));
  EXPECT_EQ(flat_parameters(p.adapters[0]), before);
}

TEST(DeltaRule, ScalarToyMatchesChainRule) {
  // Single-token identity adapter with only omega_1 active: generated = omega_1 * source.
  ModelSpec s;
  s.kind = ModelKind::mlp_large;
  s.classes = 2;
  s.input_dim = 1;
  s.rank = 1;
  s.transfer_slots = {"fc1"};
  ZooModel source = build_model(s);
  s.kind = ModelKind::mlp_small;
  ZooModel target = build_model(s);
  TransferPlan plan;
  plan.pairs = {{"fc1", "fc1"}};
  plan.directions = Direction::l2s;
  AdapterOptions opts;
  opts.rank = 1;
  opts.attn_dim = 1;
  Rng rng(6);
  std::vector<PairAdapter> adapters{
      PairAdapter::make(AdapterKind::lpka_row_only, plan.pairs[0], source, target, opts, Direction::l2s, rng)};
  LpkaAdapter& lp = *adapters[0].ktl()->layers()[0].to_small;
  for (Tensor* t : {&lp.combos()[0].wq, &lp.combos()[0].wk, &lp.combos()[0].wv, &lp.combos()[0].wo}) {
    (*t)[0] = 1;
    t->set_requires_grad(false);
  }
  const Scalar phi = lp.omega()[0][0], c = source.factors("fc1").a[0];
  const auto events = transfer_step(plan, {&source, &target}, adapters, 4, Direction::l2s);
  ASSERT_NEAR(target.factors("fc1").a[0], phi * c, 1e-15);
  const Scalar drift = Scalar(0.37);
  target.factors("fc1").a[0] += drift;
  const Scalar eta = Scalar(0.2);
  adapter_update(events, {&source, &target}, adapters, eta);
  // delta = generated - current = -drift
  EXPECT_NEAR(lp.omega()[0][0], phi - eta * c * (-drift), 1e-15);
}

TEST(DeltaRule, MatchesFiniteDifferenceJacobian) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Direction dir = seed % 3 == 0 ? Direction::both : (seed % 2 ? Direction::l2s : Direction::s2l);
    EXPECT_LE(delta_rule_gap(seed, dir), 1e-6) << "seed " << seed;
  }
}

TEST(DeltaRule, TinyAdapterBudget) {
  TinyPair p(1, Direction::l2s);
  EXPECT_LE(p.adapters[0].parameter_count(), 50u);
}

TEST(DeltaRule, RegenerationMovesTowardCurrentValue) {
  TinyPair p(8, Direction::l2s);
  Rng rng(9);
  const auto events = transfer_step(p.plan, p.models(), p.adapters, 4, Direction::l2s);
  drift_receiver(p, events[0], rng);
  const Tensor current = current_value(events[0], p.models(), p.adapters[0]);
  const double before = frobenius_diff(events[0].generated, current);
  adapter_update(events, p.models(), p.adapters, Scalar(0.05));
  NoGradScope ng;
  const Tensor regen = p.adapters[0].generate_for(events[0].source_input, events[0].target_input, Direction::l2s,
                                                  Direction::l2s);
  EXPECT_LT(frobenius_diff(regen, current), before);
}

TEST(DeltaRule, MissingSnapshotIsContractError) {
  TinyPair p(10, Direction::l2s);
  auto events = transfer_step(p.plan, p.models(), p.adapters, 4, Direction::l2s);
  events[0].generated = Tensor::zeros({1, 1});
  EXPECT_THROW(adapter_update(events, p.models(), p.adapters, Scalar(0.1)), ContractError);
}

namespace {

Dataset separable(std::size_t n, std::uint64_t seed) {
  SyntheticTask task;
  task.classes = 3;
  task.input_dim = 4;
  task.separation = 4;
  task.noise = 0.5;
  task.train_size = n;
  task.test_size = 10;
  task.sample_seed = seed;
  return gen_synthetic(task).first;
}

}  // namespace

TEST(SelfLearning, ZeroRateKeepsParameters) {
  TinyPair p(11, Direction::l2s);
  const std::string before = checkpoint_bytes(p.target.checkpoint_entries());
  const Batch b{Tensor({4, 2}, std::vector<Scalar>(8, 0.5)), {0, 1, 1, 0}};
  const Scalar loss = self_learning_step(p.target, b, 0);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(checkpoint_bytes(p.target.checkpoint_entries()), before);
}

TEST(SelfLearning, LeastSquaresStepIsAnalytic) {
  ModelSpec s;
  s.classes = 2;
  s.input_dim = 1;
  ZooModel m = build_model(s);
  Tensor head = std::get<Tensor>(m.layer("head").weight);
  head.assign(Tensor::zeros(head.shape()));
  Tensor pick = Tensor::zeros(head.shape());
  pick[0] = 1;
  const Scalar x = 1.5, y = 2.0, eta = 0.1;
  // One-parameter least squares (x w - y)^2 on the first head weight.
  LossFn loss = [&](const Tensor&, const Batch&) {
    const Tensor r = sub(scale(dot(head, pick), x), Tensor::scalar(y));
    return mul(r, r);
  };
  self_learning_step(m, Batch{Tensor::zeros({1, 1}), {0}}, eta, loss);
  EXPECT_NEAR(head[0], eta * 2 * y * x, 1e-15);
  EXPECT_EQ(head[1], 0.0);
}

TEST(SelfLearning, LossDecreasesOnSeparableData) {
  ModelSpec s;
  s.classes = 3;
  s.input_dim = 4;
  ZooModel m = build_model(s);
  auto data = std::make_shared<const Dataset>(separable(600, 3));
  BatchStream stream(data, 32, 4);
  Scalar first = 0, last = 0;
  for (int i = 0; i < 200; ++i) {
    const Scalar l = self_learning_step(m, stream.next(), Scalar(0.05));
    if (i < 10) first += l;
    if (i >= 190) last += l;
  }
  EXPECT_LT(last, 0.5 * first);
  EXPECT_GT(evaluate(m, *data).top1, 0.9);
}

TEST(SelfLearning, NonFiniteLossThrows) {
  TinyPair p(12, Direction::l2s);
  Batch b{Tensor::zeros({1, 2}), {0}};
  LossFn nan_loss = [](const Tensor& logits, const Batch&) { return scale(sum(logits), std::nan("")); };
  EXPECT_THROW(self_learning_step(p.target, b, Scalar(0.1), nan_loss), NonFiniteError);
}

namespace {

struct Rig {
  std::shared_ptr<const Dataset> src_train, tgt_train, test;
  ZooModel source, target;
  std::unique_ptr<BatchStream> src_stream, tgt_stream;

  explicit Rig(std::vector<std::string> slots) {
    SyntheticTask task;
    task.classes = 4;
    task.input_dim = 6;
    task.train_size = 300;
    task.test_size = 100;
    auto [train, test_set] = gen_synthetic(task);
    src_train = std::make_shared<const Dataset>(train);
    tgt_train = std::make_shared<const Dataset>(train.head(120));
    test = std::make_shared<const Dataset>(test_set);
    ModelSpec s;
    s.kind = ModelKind::mlp_large;
    s.classes = 4;
    s.input_dim = 6;
    s.rank = 4;
    s.transfer_slots = slots;
    s.seed = 5;
    source = build_model(s);
    s.kind = ModelKind::mlp_small;
    s.seed = 6;
    target = build_model(s);
    src_stream = std::make_unique<BatchStream>(src_train, 16, 7);
    tgt_stream = std::make_unique<BatchStream>(tgt_train, 16, 8);
  }

  TrainedModel src() { return {"source", &source, src_stream.get(), test.get(), Scalar(0.05)}; }
  TrainedModel tgt() { return {"target", &target, tgt_stream.get(), test.get(), Scalar(0.05)}; }
};

AdapterOptions rank4() {
  AdapterOptions o;
  o.rank = 4;
  return o;
}

TrainingOptions options(std::size_t steps) {
  TrainingOptions o;
  o.total_steps = steps;
  o.eval_every = 10;
  return o;
}

}  // namespace

TEST(RunTraining, NoPairsMatchesVanillaBitExactly) {
  Rig a({}), b({});
  TransferPlan plan;
  std::vector<PairAdapter> none;
  const auto with_plan = run_training(plan, a.src(), a.tgt(), none, options(40));
  const auto vanilla = train_vanilla({b.src(), b.tgt()}, options(40));
  EXPECT_EQ(with_plan, vanilla);
  EXPECT_EQ(checkpoint_bytes(a.target.checkpoint_entries()), checkpoint_bytes(b.target.checkpoint_entries()));
  EXPECT_EQ(checkpoint_bytes(a.source.checkpoint_entries()), checkpoint_bytes(b.source.checkpoint_entries()));
}

TEST(RunTraining, CycleLongerThanHorizonMatchesVanilla) {
  Rig a({"head"}), b({"head"});
  TransferPlan plan;
  plan.pairs = {{"head", "head"}};
  plan.t_cycle = 100;
  Rng rng(1);
  std::vector<PairAdapter> adapters{
      PairAdapter::make(AdapterKind::lpka_full, plan.pairs[0], a.source, a.target, rank4(), Direction::both, rng)};
  auto with_plan = run_training(plan, a.src(), a.tgt(), adapters, options(40));
  for (auto& r : with_plan) r.omega = {};
  EXPECT_EQ(with_plan, train_vanilla({b.src(), b.tgt()}, options(40)));
  EXPECT_EQ(checkpoint_bytes(a.target.checkpoint_entries()), checkpoint_bytes(b.target.checkpoint_entries()));
}

TEST(RunTraining, CycleOneTransfersEveryStepAndIsDeterministic) {
  auto run = [] {
    Rig rig({"head"});
    TransferPlan plan;
    plan.pairs = {{"head", "head"}};
    plan.t_cycle = 1;
    Rng rng(2);
    std::vector<PairAdapter> adapters{PairAdapter::make(AdapterKind::lpka_full, plan.pairs[0], rig.source, rig.target,
                                                        rank4(), Direction::both, rng)};
    return run_training(plan, rig.src(), rig.tgt(), adapters, options(20));
  };
  const auto x = run();
  for (const auto& r : x) EXPECT_EQ(r.phase, "transfer");
  EXPECT_EQ(format_run_records(x), format_run_records(run()));
}

TEST(RunTraining, FrozenSourceIsUntouchedAndSilent) {
  Rig rig({"head"});
  TransferPlan plan;
  plan.pairs = {{"head", "head"}};
  plan.directions = Direction::l2s;
  plan.frozen_source = true;
  Rng rng(3);
  std::vector<PairAdapter> adapters{
      PairAdapter::make(AdapterKind::lpka_full, plan.pairs[0], rig.source, rig.target, rank4(), Direction::l2s, rng)};
  const std::string before = checkpoint_bytes(rig.source.checkpoint_entries());
  const auto records = run_training(plan, rig.src(), rig.tgt(), adapters, options(24));
  EXPECT_EQ(checkpoint_bytes(rig.source.checkpoint_entries()), before);
  for (const auto& r : records) EXPECT_EQ(r.model_id, "target");
  EXPECT_EQ(records.size(), 24u);
}

TEST(RunTraining, SelfTransferHasOneStream) {
  Rig rig({"head", "fc2"});
  TransferPlan plan;
  plan.pairs = {{"head", "fc2"}};
  plan.directions = Direction::l2s;
  Rng rng(4);
  std::vector<PairAdapter> adapters{
      PairAdapter::make(AdapterKind::lpka_full, plan.pairs[0], rig.target, rig.target, rank4(), Direction::l2s, rng)};
  const auto records = run_training(plan, rig.tgt(), rig.tgt(), adapters, options(12));
  ASSERT_EQ(records.size(), 12u);
  EXPECT_EQ(records[3].phase, "transfer");
  EXPECT_EQ(records[2].phase, "self");
}

TEST(StripAdapter, LogitsAndParameterCount) {
  Rig rig({"head"});
  TransferPlan plan;
  plan.pairs = {{"head", "head"}};
  Rng rng(5);
  std::vector<PairAdapter> adapters{
      PairAdapter::make(AdapterKind::lpka_full, plan.pairs[0], rig.source, rig.target, rank4(), Direction::both, rng)};
  run_training(plan, rig.src(), rig.tgt(), adapters, options(16));
  const Tensor before = rig.target.forward(rig.test->inputs);
  const auto bundle = strip_adapter({{"source", &rig.source}, {"target", &rig.target}});
  adapters.clear();
  EXPECT_TRUE(bit_equal(bundle.model("target").forward(rig.test->inputs), before));
  EXPECT_EQ(bundle.parameter_count(), rig.source.parameter_count() + rig.target.parameter_count());
  EXPECT_EQ(bundle.model("target").parameter_count(), Rig({"head"}).target.parameter_count());
  for (const auto& e : bundle.checkpoint_entries()) EXPECT_EQ(e.slot_id.find("adapter"), std::string::npos);
  EXPECT_THROW(bundle.model("other"), ContractError);
}

TEST(RunRecords, RoundTripAndLineNumberedErrors) {
  std::vector<RunRecord> rows(2);
  rows[0] = {1, "self", "target", 2.25, 0.5, 0.75, {0.25, 0.25, std::nullopt, std::nullopt}};
  rows[1] = {2, "transfer", "source", 1.0 / 3, std::nullopt, std::nullopt, {}};
  EXPECT_EQ(parse_run_records(format_run_records(rows)), rows);
  std::string bad = format_run_records(rows);
  bad.replace(bad.find("2,transfer"), 1, "x");
  try {
    parse_run_records(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, TopKOnTinyData) {
  ModelSpec s;
  s.classes = 3;
  s.input_dim = 2;
  ZooModel m = build_model(s);
  Dataset d;
  d.inputs = Tensor::zeros({4, 2});
  d.labels = {0, 1, 2, 0};
  d.classes = 3;
  const auto acc = evaluate(m, d);
  EXPECT_EQ(acc.top5, 1.0);
  EXPECT_GE(acc.top1, 0.25);
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "../common/oracles.hpp"
#include "mergenet/baselines.hpp"
#include "mergenet/checkpoint.hpp"
#include "mergenet/data.hpp"
#include "mergenet/errors.hpp"
#include "mergenet/losses.hpp"
#include "mergenet/ops.hpp"
#include "mergenet/zoo.hpp"

using namespace mergenet;
using namespace mergenet::testing;

TEST(Synthetic, DeterministicAndShaped) {
  SyntheticTask task;
  task.classes = 5;
  task.input_dim = 7;
  task.components_per_class = 2;
  task.train_size = 50;
  task.test_size = 20;
  const auto [a_train, a_test] = gen_synthetic(task);
  const auto [b_train, b_test] = gen_synthetic(task);
  EXPECT_TRUE(bit_equal(a_train.inputs, b_train.inputs));
  EXPECT_EQ(a_test.labels, b_test.labels);
  EXPECT_EQ(a_train.inputs.shape(), (Shape{50, 7}));
  EXPECT_EQ(a_test.size(), 20u);
  for (int y : a_train.labels) EXPECT_LT(y, 5);
  task.sample_seed = 2;
  EXPECT_FALSE(bit_equal(gen_synthetic(task).first.inputs, a_train.inputs));
}

TEST(Synthetic, ExplicitMeansWithZeroNoise) {
  SyntheticTask task;
  task.classes = 2;
  task.input_dim = 2;
  task.noise = 0;
  task.means = {{1, 2}, {-3, 4}};
  task.train_size = 10;
  const auto train = gen_synthetic(task).first;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& mu = task.means[static_cast<std::size_t>(train.labels[i])];
    EXPECT_EQ(train.inputs.at(i, 0), mu[0]);
    EXPECT_EQ(train.inputs.at(i, 1), mu[1]);
  }
}

TEST(Synthetic, SignalSubspace) {
  SyntheticTask task;
  task.classes = 3;
  task.input_dim = 6;
  task.signal_dim = 2;
  task.noise = 0;
  task.train_size = 30;
  const auto train = gen_synthetic(task).first;
  // Noise-free samples span exactly two directions.
  const auto svd = jacobi_svd(train.inputs);
  EXPECT_GT(svd.s[1], 1e-6);
  EXPECT_LT(svd.s[2], 1e-9);
  task.signal_dim = 7;
  EXPECT_THROW(gen_synthetic(task), ContractError);
}

TEST(BatchStream, EpochsCoverEveryIndexOnce) {
  Dataset d;
  d.classes = 10;
  d.inputs = Tensor::zeros({10, 1});
  for (int i = 0; i < 10; ++i) {
    d.inputs[i] = i;
    d.labels.push_back(i);
  }
  BatchStream s(std::make_shared<const Dataset>(d), 3, 9);
  std::set<int> seen;
  for (int b = 0; b < 3; ++b)
    for (int y : s.next().labels) seen.insert(y);
  EXPECT_EQ(seen.size(), 9u);
  EXPECT_EQ(s.epoch(), 0u);
  s.next();
  EXPECT_EQ(s.epoch(), 1u);
  BatchStream again(std::make_shared<const Dataset>(d), 3, 9);
  BatchStream other(std::make_shared<const Dataset>(d), 3, 9);
  EXPECT_EQ(again.next().labels, other.next().labels);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  Rng rng(61);
  Dataset d;
  d.inputs = random_tensor({200, 3}, rng, 5.0);
  for (std::size_t i = 0; i < d.inputs.numel(); i += 3) d.inputs[i] += 10;
  d.labels.assign(200, 0);
  const auto st = Standardizer::fit(d);
  st.apply(d);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 200; ++i) m += d.inputs.at(i, j);
    m /= 200;
    for (std::size_t i = 0; i < 200; ++i) v += (d.inputs.at(i, j) - m) * (d.inputs.at(i, j) - m);
    EXPECT_NEAR(m, 0, 1e-12);
    EXPECT_NEAR(v / 200, 1, 1e-9);
  }
}

TEST(Cifar, RoundTripBothVariants) {
  Rng rng(62);
  for (CifarVariant v : {CifarVariant::cifar10, CifarVariant::cifar100}) {
    const std::size_t classes = v == CifarVariant::cifar10 ? 10 : 100;
    std::string bytes;
    for (int rec = 0; rec < 4; ++rec) {
      if (v == CifarVariant::cifar100) bytes.push_back(static_cast<char>(rng.index(20)));
      bytes.push_back(static_cast<char>(rng.index(classes)));
      for (int p = 0; p < 3072; ++p) bytes.push_back(static_cast<char>(rng.index(256)));
    }
    ASSERT_EQ(bytes.size(), 4 * cifar_record_size(v));
    const Dataset d = parse_cifar_binary(bytes, v);
    EXPECT_EQ(d.size(), 4u);
    EXPECT_EQ(d.features(), 3072u);
    EXPECT_EQ(d.classes, classes);
    EXPECT_EQ(encode_cifar_binary(d, v), bytes);
    EXPECT_EQ(parse_cifar_binary(bytes, v, 2).size(), 2u);
    const std::size_t off = v == CifarVariant::cifar100 ? 2 : 1;
    EXPECT_EQ(d.inputs.at(0, 5), static_cast<unsigned char>(bytes[off + 5]) / 255.0);
  }
}

TEST(Cifar, MalformedInputs) {
  EXPECT_THROW(parse_cifar_binary(std::string(3000, '\0'), CifarVariant::cifar10), FormatError);
  std::string bad(3073, '\0');
  bad[0] = 10;
  EXPECT_THROW(parse_cifar_binary(bad, CifarVariant::cifar10), FormatError);
  EXPECT_THROW(load_cifar_binary("/nonexistent/data_batch_1.bin", CifarVariant::cifar10), Error);
}

TEST(Zoo, ArchitecturesAndSlots) {
  ModelSpec s;
  s.kind = ModelKind::mlp_large;
  s.input_dim = 12;
  EXPECT_EQ(build_model(s).weight_slots(), (std::vector<std::string>{"fc1", "fc2", "fc3", "head"}));
  s.kind = ModelKind::cnn_large;
  s.image = ImageShape{3, 8, 8};
  s.input_dim = 192;
  const ZooModel cnn = build_model(s);
  EXPECT_EQ(cnn.weight_slots().size(), 5u);
  EXPECT_EQ(cnn.weight_matrix("conv2").shape(), (Shape{32, 16 * 9}));
  EXPECT_EQ(cnn.forward(Tensor::zeros({2, 192})).shape(), (Shape{2, 10}));
  s.transfer_slots = {"conv9"};
  EXPECT_THROW(build_model(s), ConfigError);
}

TEST(Zoo, DeterministicBuildAndFactorizedSlots) {
  ModelSpec s;
  s.transfer_slots = {"head"};
  s.rank = 4;
  const ZooModel a = build_model(s), b = build_model(s);
  EXPECT_EQ(checkpoint_bytes(a.checkpoint_entries()), checkpoint_bytes(b.checkpoint_entries()));
  EXPECT_TRUE(a.is_factorized("head"));
  EXPECT_FALSE(a.is_factorized("fc1"));
  EXPECT_EQ(a.factors("head").a.shape(), (Shape{4, 64}));
  const auto p = a.partition();
  EXPECT_EQ(p.transfer_slots, (std::vector<std::string>{"head"}));
  EXPECT_NO_THROW(p.validate(a.all_slots()));
}

TEST(Zoo, FactorizeSlotPreservesLowRankWeight) {
  ModelSpec s;
  ZooModel m = build_model(s);
  Rng rng(63);
  std::get<Tensor>(m.layer("head").weight).assign(random_rank_matrix(10, 64, 3, rng));
  const Tensor x = random_tensor({5, 32}, rng);
  const Tensor before = m.forward(x);
  m.factorize_slot("head", 3);
  EXPECT_TRUE(m.is_factorized("head"));
  EXPECT_LE(max_abs_diff(m.forward(x), before), 1e-8);
}

TEST(Zoo, CloneIsIndependent) {
  ModelSpec s;
  s.transfer_slots = {"fc2"};
  ZooModel a = build_model(s);
  ZooModel b = a.clone();
  b.factors("fc2").a[0] += 1;
  EXPECT_NE(a.factors("fc2").a[0], b.factors("fc2").a[0]);
  a.set_trainable(false);
  for (const auto& p : a.parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(CopyShare, OverlapRegionOnly) {
  Tensor dst = Tensor::zeros({2, 4});
  copy_overlap(Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}), dst);
  EXPECT_EQ(dst.to_rows(), (std::vector<std::vector<Scalar>>{{1, 2, 0, 0}, {3, 4, 0, 0}}));
  ModelSpec s;
  s.kind = ModelKind::mlp_large;
  const ZooModel big = build_model(s);
  s.kind = ModelKind::mlp_small;
  ZooModel small = build_model(s);
  copy_share_baseline(big, small, {{"fc3", "fc2"}});
  const Tensor from = big.weight_matrix("fc3"), to = small.weight_matrix("fc2");
  EXPECT_EQ(to.at(5, 7), from.at(5, 7));
  EXPECT_EQ(to.at(63, 63), from.at(63, 63));
}

TEST(KdLoss, Properties) {
  Rng rng(64);
  const Tensor s = random_tensor({4, 5}, rng), t = random_tensor({4, 5}, rng);
  const std::vector<int> y{0, 1, 2, 3};
  EXPECT_NEAR(kd_loss(s, t, 3, 0, y).item(), cross_entropy(s, y).item(), 1e-12);
  EXPECT_NEAR(kd_loss(s, s, 3, 1, y).item(), 0, 1e-12);
  EXPECT_GT(kd_loss(s, t, 3, 1, y).item(), 0);
  // tau^2 KL(p_t || p_s) computed directly
  double kl = 0;
  const Tensor pt = softmax_rows(scale(t, 1.0 / 3)), ls = log_softmax_rows(scale(s, 1.0 / 3));
  for (std::size_t i = 0; i < pt.numel(); ++i) kl += pt[i] * (std::log(pt[i]) - ls[i]);
  EXPECT_NEAR(kd_loss(s, t, 3, 1, y).item(), 9 * kl / 4, 1e-12);
}

TEST(KdLoss, TeacherReceivesNoGradient) {
  Rng rng(65);
  Tensor s = random_tensor({2, 3}, rng), t = random_tensor({2, 3}, rng);
  s.set_requires_grad(true);
  t.set_requires_grad(true);
  GradTape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = kd_loss(s, t, 2, 0.5, std::vector<int>{0, 2});
  }
  tape.backward(loss);
  EXPECT_TRUE(s.has_grad());
  EXPECT_FALSE(t.has_grad());
}

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "../common/fixtures.hpp"
#include "../common/grad_suite.hpp"
#include "../common/oracles.hpp"
#include "mergenet/checkpoint.hpp"
#include "mergenet/experiment.hpp"
#include "mergenet/presets.hpp"
#include "mergenet/report.hpp"

using namespace mergenet;
using namespace mergenet::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

Verdict fail(std::string why) { return {false, std::move(why)}; }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mergenet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Verdict ac1() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_op;
  const auto cases = gradient_suite();
  for (const auto& c : cases) {
    Rng rng = Rng::derive(2024, fnv1a64(c.op));
    for (int i = 0; i < 100; ++i) {
      const double e = c.run(rng).max_rel_error;
      if (e > worst) {
        worst = e;
        worst_op = c.op;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string detail = std::to_string(cases.size()) + " ops x 100, max rel error " + fmt("%.3g", worst) +
                             " (" + worst_op + "), " + fmt("%.1fs", secs);
  return {worst <= kGradTol && secs < 60, detail};
}

bool softmax_rows_sum_to_one(const LpkaTrace& trace) {
  for (const auto& attn : trace.attention)
    for (std::size_t i = 0; i < attn.rows(); ++i) {
      Scalar s = 0;
      for (std::size_t j = 0; j < attn.cols(); ++j) s += attn.at(i, j);
      if (std::abs(s - 1) > 1e-9) return false;
    }
  return true;
}

Verdict ac2() {
  Rng rng(202);
  for (int trial = 0; trial < 200; ++trial) {
    const LpkaDims dims{random_dim(rng, 1, 6), random_dim(rng, 1, 6), random_dim(rng, 1, 6), rng.index(2) ? 16u : 4u};
    const Tensor at = random_tensor({dims.rank, dims.target_cols}, rng);
    const Tensor as = random_tensor({dims.rank, dims.source_cols}, rng);
    for (LpkaVariant v : {LpkaVariant::full, LpkaVariant::row_only, LpkaVariant::avg_attn}) {
      const LpkaAdapter a(dims, v, rng);
      LpkaTrace trace;
      if (lpka_forward(a, at, as, v, &trace).shape() != Shape{dims.rank, dims.target_cols})
        return fail("output shape, trial " + std::to_string(trial));
      if (!softmax_rows_sum_to_one(trace)) return fail("softmax row sum, trial " + std::to_string(trial));
    }
    LpkaAdapter full(dims, LpkaVariant::full, rng);
    full.set_omega_trainable(false);
    if (!bit_equal(lpka_forward(full, at, as, LpkaVariant::full), lpka_forward(full, at, as, LpkaVariant::avg_attn)))
      return fail("full(omega=0.25 frozen) != avg_attn, trial " + std::to_string(trial));
    full.set_omega_trainable(true);
    for (std::size_t i = 0; i < 4; ++i) full.omega()[i][0] = i == 0 ? 1 : 0;
    if (!bit_equal(lpka_forward(full, at, as, LpkaVariant::full), lpka_forward(full, at, as, LpkaVariant::row_only)))
      return fail("full(omega=e1) != row_only, trial " + std::to_string(trial));
  }
  return {true, "200 tuples, shapes, softmax rows, variant identities bit-exact"};
}

Verdict ac3() {
  Rng rng(203);
  LpkaAdapter a(LpkaDims{1, 1, 1, 1}, LpkaVariant::full, rng);
  for (auto& w : a.combos())
    for (Tensor* t : {&w.wq, &w.wk, &w.wv, &w.wo}) (*t)[0] = 1;
  double worst = 0;
  for (Scalar src : {0.7, -2.5, 13.0, 1e-3}) {
    const Tensor out = lpka_forward(a, Tensor::from_rows({{Scalar(0.3)}}), Tensor::from_rows({{src}}));
    worst = std::max(worst, double(std::abs(out[0] - src)));
  }
  return {worst <= 1e-12, "max |out - source| " + fmt("%.3g", worst)};
}

Verdict ac4() {
  Rng rng(204);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t horizon = random_dim(rng, 1, 500), cycle = random_dim(rng, 1, 16), ratio = random_dim(rng, 1, 4);
    std::size_t counted = 0, literal = 0;
    for (std::size_t t = 1; t <= horizon; ++t) counted += should_transfer(t, cycle, ratio);
    for (std::size_t t = 0; t < horizon; ++t) literal += should_transfer(t, cycle, ratio, true);
    if (counted != horizon / (cycle * ratio) || count_transfer_events(horizon, cycle, ratio) != counted)
      return fail("count mismatch at T=" + std::to_string(horizon));
    if (!should_transfer(0, cycle, ratio, true) || count_transfer_events(horizon, cycle, ratio, true) != literal)
      return fail("literal mode at T=" + std::to_string(horizon));
  }
  return {true, "50 triples equal floor(T/(t_cycle*ratio)); literal mode fires at t=0"};
}

Verdict ac5() {
  double worst = 0;
  std::size_t params = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Direction dir = seed % 2 ? Direction::l2s : Direction::s2l;
    params = std::max(params, TinyPair(seed, dir).adapters[0].parameter_count());
    worst = std::max(worst, delta_rule_gap(seed, dir));
  }
  return {worst <= 1e-6 && params <= 50,
          "20 seeds, " + std::to_string(params) + " parameters, max gap " + fmt("%.3g", worst)};
}

Verdict ac6() {
  Rng rng(206);
  double exact = 0, excess = -std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = random_dim(rng, 2, 12), cols = random_dim(rng, 2, 12);
    const std::size_t r = random_dim(rng, 1, std::min(rows, cols));
    const Tensor w = random_rank_matrix(rows, cols, r, rng);
    const auto re = reencode_truncated_svd(w, r);
    exact = std::max(exact, frobenius_diff(product(re.param.b, re.param.a), w));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor w = random_tensor({8, 8}, rng);
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t r = 1; r <= 8; ++r) {
      const auto re = reencode_truncated_svd(w, r);
      const double err = frobenius_diff(product(re.param.b, re.param.a), w);
      excess = std::max(excess, err - oracle_truncation_error(w, r));
      monotone = monotone && err <= previous;
      previous = err;
    }
  }
  return {exact <= 1e-6 && excess <= 1e-6 && monotone,
          "rank-r residual " + fmt("%.3g", exact) + ", max excess over oracle " + fmt("%.3g", excess) +
              (monotone ? ", monotone in r" : ", NOT monotone")};
}

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
    s.transfer_slots = std::move(slots);
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

Verdict ac7() {
  TrainingOptions opts;
  opts.total_steps = 60;
  opts.eval_every = 10;
  Rig a({}), b({});
  std::vector<PairAdapter> none;
  const auto planned = run_training(TransferPlan{}, a.src(), a.tgt(), none, opts);
  const auto vanilla = train_vanilla({b.src(), b.tgt()}, opts);
  if (planned != vanilla) return fail("records differ from vanilla trainer");
  if (checkpoint_bytes(a.target.checkpoint_entries()) != checkpoint_bytes(b.target.checkpoint_entries()) ||
      checkpoint_bytes(a.source.checkpoint_entries()) != checkpoint_bytes(b.source.checkpoint_entries()))
    return fail("checkpoints differ from vanilla trainer");

  Rig rig({"head"});
  TransferPlan plan;
  plan.pairs = {{"head", "head"}};
  AdapterOptions ao;
  ao.rank = 4;
  Rng rng(207);
  std::vector<PairAdapter> adapters{
      PairAdapter::make(AdapterKind::lpka_full, plan.pairs[0], rig.source, rig.target, ao, Direction::both, rng)};
  run_training(plan, rig.src(), rig.tgt(), adapters, opts);
  const std::size_t adapter_params = adapters[0].parameter_count();
  const Tensor logits = rig.target.forward(rig.test->inputs);
  const auto bundle = strip_adapter({{"target", &rig.target}});
  adapters.clear();
  if (!bit_equal(bundle.model("target").forward(rig.test->inputs), logits)) return fail("logits changed by strip");
  const std::size_t plain = Rig({"head"}).target.parameter_count();
  if (bundle.parameter_count() != plain)
    return fail("bundle has " + std::to_string(bundle.parameter_count()) + " parameters, vanilla " +
                std::to_string(plain));
  return {true, "no-pair plan bit-exact with vanilla; strip keeps logits; bundle " + std::to_string(plain) +
                    " parameters (adapter held " + std::to_string(adapter_params) + ")"};
}

Verdict ac8() {
  const fs::path root = scratch("frozen");
  const Suite suite = make_preset("frozen_source");
  const auto res = sweep(suite.configs, suite.seeds, root, 1);
  if (res.any_failed) return fail("a run failed");
  std::size_t checked = 0;
  for (const auto& run : res.runs) {
    const fs::path initial = run.dir / "checkpoints/source_initial.ckpt";
    if (!fs::exists(initial)) continue;
    if (read_file(initial) != read_file(run.dir / "checkpoints/source_final.ckpt"))
      return fail("source checkpoint changed in " + run.dir.string());
    ++checked;
  }
  fs::remove_all(root);
  if (checked == 0) return fail("no frozen-source run wrote checkpoints");
  return {true, std::to_string(checked) + " runs, source checkpoints byte-identical"};
}

const ReportRow* aggregate_for(const std::vector<ReportRow>& table, const std::string& variant) {
  for (const auto& r : table)
    if (r.kind == "aggregate" && r.variant == variant) return &r;
  return nullptr;
}

Verdict ac9() {
  const fs::path root = scratch("smoke");
  const Suite suite = make_preset("smoke_transfer");
  const auto start = std::chrono::steady_clock::now();
  const auto res = sweep(suite.configs, suite.seeds, root, 1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string csv = (root / "report.csv").string();
  const ReportRow* vanilla = aggregate_for(res.table, "vanilla");
  const ReportRow* transfer = aggregate_for(res.table, "lpka_full");
  if (!vanilla || !transfer || !vanilla->mean[4] || !transfer->mean[4]) return fail("missing aggregate rows");
  const double tm = *transfer->mean[4], vm = *vanilla->mean[4];
  const std::string detail = "target top1 transfer " + fmt("%.4f", tm) + " +- " + fmt("%.4f", *transfer->stddev[4]) +
                             " vs vanilla " + fmt("%.4f", vm) + " +- " + fmt("%.4f", *vanilla->stddev[4]) + ", " +
                             std::to_string(suite.seeds.size()) + " seeds, " + fmt("%.0fs", secs) + ", " + csv;
  return {!res.any_failed && tm >= vm && secs < 300, detail};
}

/// Every run row carries the target's final and best metrics, and each
/// configured variant has an aggregate.
std::string completeness_problem(const Suite& suite, const std::vector<ReportRow>& table) {
  std::set<std::string> variants;
  std::size_t runs = 0;
  for (const auto& r : table) {
    if (r.kind == "aggregate") {
      variants.insert(r.variant);
      continue;
    }
    ++runs;
    if (r.status != "ok") return "run " + r.variant + " status " + r.status;
    for (std::size_t k = 4; k < 8; ++k)
      if (!r.mean[k]) return std::string("run ") + r.variant + " lacks " + kReportMetrics[k];
  }
  if (runs != suite.configs.size() * suite.seeds.size()) return "expected " + std::to_string(runs) + " runs";
  for (const auto& c : suite.configs)
    if (!variants.count(c.variant)) return "no aggregate for " + c.variant;
  return {};
}

Verdict ac10() {
  struct Expect {
    const char* preset;
    std::vector<std::string> variants;
  };
  const std::vector<Expect> expected = {
      {"ablation_table7", {"mlp", "lpka_row_only", "lpka_avg", "lpka_full"}},
      {"tcycle_sweep", {"t_cycle=1", "t_cycle=2", "t_cycle=4", "t_cycle=8", "t_cycle=16"}},
      {"self_transfer", {"lpka_full"}},
      {"cross_layer", {"fc3->fc2"}},
      {"baselines", {"copy_share", "kd"}},
  };
  const fs::path root = scratch("protocols");
  std::string summary;
  for (const auto& e : expected) {
    const Suite suite = make_preset(e.preset);
    for (const auto& v : e.variants) {
      bool found = false;
      for (const auto& c : suite.configs) found = found || c.variant == v;
      if (!found) return fail(std::string(e.preset) + " has no variant " + v);
    }
    const auto first = sweep(suite.configs, suite.seeds, root / e.preset / "first", 1);
    const auto second = sweep(suite.configs, suite.seeds, root / e.preset / "second", 1);
    if (first.any_failed || second.any_failed) return fail(std::string(e.preset) + ": a run failed");
    const std::string problem = completeness_problem(suite, first.table);
    if (!problem.empty()) return fail(std::string(e.preset) + ": " + problem);
    for (const char* f : {"report.csv", "curves.csv"})
      if (read_file(root / e.preset / "first" / f) != read_file(root / e.preset / "second" / f))
        return fail(std::string(e.preset) + ": rerun " + f + " differs");
    for (std::size_t i = 0; i < first.runs.size(); ++i)
      if (read_file(first.runs[i].dir / "records.csv") != read_file(second.runs[i].dir / "records.csv"))
        return fail(std::string(e.preset) + ": rerun records differ in " + first.runs[i].dir.string());
    summary += std::string(summary.empty() ? "" : ", ") + e.preset;
  }
  fs::remove_all(root);
  return {true, summary + " complete; reruns bit-identical"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    failed += !v.pass;
    std::printf("%-4s %s  %s\n", name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

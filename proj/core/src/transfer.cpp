#include "mergenet/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "mergenet/baselines.hpp"
#include "mergenet/csv.hpp"
#include "mergenet/errors.hpp"
#include "mergenet/losses.hpp"
#include "mergenet/ops.hpp"

namespace mergenet {

const char* adapter_kind_name(AdapterKind k) {
  switch (k) {
    case AdapterKind::lpka_full: return "lpka_full";
    case AdapterKind::lpka_row_only: return "lpka_row_only";
    case AdapterKind::lpka_avg: return "lpka_avg";
    case AdapterKind::mlp: return "mlp";
    case AdapterKind::copy_share: return "copy_share";
    case AdapterKind::kd: return "kd";
    case AdapterKind::none: return "none";
  }
  return "?";
}

AdapterKind parse_adapter_kind(const std::string& s) {
  for (auto k : {AdapterKind::lpka_full, AdapterKind::lpka_row_only, AdapterKind::lpka_avg, AdapterKind::mlp,
                 AdapterKind::copy_share, AdapterKind::kd, AdapterKind::none}) {
    if (s == adapter_kind_name(k)) return k;
  }
  throw ConfigError("adapter.kind: expected one of mlp, lpka_full, lpka_row_only, lpka_avg, none, copy_share, kd; got \"" +
                    s + "\"");
}

bool is_lpka(AdapterKind k) {
  return k == AdapterKind::lpka_full || k == AdapterKind::lpka_row_only || k == AdapterKind::lpka_avg;
}

bool has_adapter_params(AdapterKind k) { return is_lpka(k) || k == AdapterKind::mlp; }

namespace {

bool moves_parameters(AdapterKind k) { return has_adapter_params(k) || k == AdapterKind::copy_share; }

LpkaVariant lpka_variant(AdapterKind k) {
  switch (k) {
    case AdapterKind::lpka_row_only: return LpkaVariant::row_only;
    case AdapterKind::lpka_avg: return LpkaVariant::avg_attn;
    default: return LpkaVariant::full;
  }
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t c = x.cols();
  auto d = x.data();
  return Tensor({end - begin, c}, std::vector<Scalar>(d.begin() + begin * c, d.begin() + end * c));
}

Tensor subtract_values(const Tensor& a, const Tensor& b) {
  std::vector<Scalar> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor(a.shape(), std::move(out));
}

void sgd_apply(const std::vector<Tensor>& params, Scalar eta) {
  for (auto p : params) {
    if (p.requires_grad() && p.has_grad()) {
      auto d = p.data();
      auto g = p.grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= eta * g[i];
    }
    p.zero_grad();
  }
}

}  // namespace

void TransferPlan::validate() const {
  if (t_cycle < 1) throw PlanError("plan.t_cycle must be >= 1");
  if (source_ratio < 1 || target_ratio < 1) throw PlanError("plan freq_ratio must be >= 1");
  if (frozen_source && includes(directions, Direction::s2l)) {
    throw PlanError("plan: a frozen source cannot receive transfers; use directions = l2s");
  }
  if (!(eta_adapter >= 0) || !(eta_source >= 0) || !(eta_target >= 0)) {
    throw PlanError("plan: learning rates must be non-negative");
  }
}

bool should_transfer(std::size_t t, std::size_t t_cycle, std::size_t ratio, bool literal_t0) {
  if (t_cycle == 0 || ratio == 0) throw PlanError("should_transfer: t_cycle and ratio must be >= 1");
  if (t == 0 && !literal_t0) throw ContractError("should_transfer: steps are 1-based");
  return t % (t_cycle * ratio) == 0;
}

std::size_t count_transfer_events(std::size_t horizon, std::size_t t_cycle, std::size_t ratio, bool literal_t0) {
  std::size_t n = 0;
  const std::size_t first = literal_t0 ? 0 : 1;
  for (std::size_t t = first; t < first + horizon; ++t) n += should_transfer(t, t_cycle, ratio, literal_t0) ? 1 : 0;
  return n;
}

// ---------------------------------------------------------------------------

PairAdapter PairAdapter::make(AdapterKind kind, const SlotPair& pair, const ZooModel& source, const ZooModel& target,
                              const AdapterOptions& opts, Direction available, Rng& rng) {
  if (!source.has_slot(pair.source_slot)) throw ContractError("unknown source slot \"" + pair.source_slot + "\"");
  if (!target.has_slot(pair.target_slot)) throw ContractError("unknown target slot \"" + pair.target_slot + "\"");
  PairAdapter out;
  out.kind_ = kind;
  out.pair_ = pair;
  out.opts_ = opts;
  if (is_lpka(kind)) {
    if (!source.is_factorized(pair.source_slot) || !target.is_factorized(pair.target_slot)) {
      throw ContractError("lpka adapter needs factorized slots: " + pair.source_slot + " -> " + pair.target_slot);
    }
    const auto& fs = source.factors(pair.source_slot);
    const auto& ft = target.factors(pair.target_slot);
    if (fs.rank() != ft.rank()) {
      throw ContractError("paired slots " + pair.source_slot + " -> " + pair.target_slot + " have ranks " +
                          std::to_string(fs.rank()) + " and " + std::to_string(ft.rank()));
    }
    KtlDims dims{fs.rank(), fs.cols(), ft.cols(), opts.attn_dim};
    out.ktl_.emplace(opts.layers, dims, lpka_variant(kind), available, rng, opts.residual);
    if (!opts.omega_trainable) out.ktl_->set_omega_trainable(false);
  } else if (kind == AdapterKind::mlp) {
    const Tensor ws = source.weight_matrix(pair.source_slot);
    const Tensor wt = target.weight_matrix(pair.target_slot);
    if (includes(available, Direction::l2s)) out.mlp_l2s_.emplace(MlpDims{ws.rows(), ws.cols(), wt.rows(), wt.cols()}, rng);
    if (includes(available, Direction::s2l)) out.mlp_s2l_.emplace(MlpDims{wt.rows(), wt.cols(), ws.rows(), ws.cols()}, rng);
  }
  return out;
}

Tensor PairAdapter::read_slot(const ZooModel& model, const std::string& slot) const {
  NoGradScope ng;
  if (kind_ != AdapterKind::mlp && model.is_factorized(slot)) return model.factors(slot).a.detach();
  return model.weight_matrix(slot).detach();
}

std::pair<Tensor, Tensor> PairAdapter::generate(const Tensor& source_in, const Tensor& target_in,
                                                Direction directions) const {
  if (ktl_) return ktl_apply(*ktl_, source_in, target_in, directions);
  Tensor new_source = source_in, new_target = target_in;
  if (kind_ == AdapterKind::mlp) {
    if (includes(directions, Direction::l2s)) {
      if (!mlp_l2s_) throw ContractError("mlp adapter has no l2s map");
      new_target = mlp_forward(*mlp_l2s_, source_in);
    }
    if (includes(directions, Direction::s2l)) {
      if (!mlp_s2l_) throw ContractError("mlp adapter has no s2l map");
      new_source = mlp_forward(*mlp_s2l_, target_in);
    }
  } else if (kind_ == AdapterKind::copy_share) {
    if (includes(directions, Direction::l2s)) {
      new_target = target_in.detach();
      copy_overlap(source_in, new_target);
    }
    if (includes(directions, Direction::s2l)) {
      new_source = source_in.detach();
      copy_overlap(target_in, new_source);
    }
  } else {
    throw ContractError(std::string("adapter kind ") + adapter_kind_name(kind_) + " does not generate parameters");
  }
  return {new_source, new_target};
}

Tensor PairAdapter::generate_for(const Tensor& source_in, const Tensor& target_in, Direction directions,
                                 Direction receiving) const {
  auto [s, t] = generate(source_in, target_in, directions);
  return receiving == Direction::l2s ? t : s;
}

std::vector<Tensor> PairAdapter::parameters() const {
  if (ktl_) return ktl_->parameters();
  std::vector<Tensor> out;
  if (mlp_l2s_) {
    auto p = mlp_l2s_->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (mlp_s2l_) {
    auto p = mlp_s2l_->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::size_t PairAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

MlpAdapter* PairAdapter::mlp(Direction d) {
  if (d == Direction::l2s) return mlp_l2s_ ? &*mlp_l2s_ : nullptr;
  if (d == Direction::s2l) return mlp_s2l_ ? &*mlp_s2l_ : nullptr;
  return nullptr;
}

std::vector<CheckpointEntry> PairAdapter::checkpoint_entries() const {
  if (ktl_) return ktl_->checkpoint_entries();
  std::vector<CheckpointEntry> out;
  auto add = [&](const std::optional<MlpAdapter>& m, const char* dir) {
    if (!m) return;
    const std::string base = std::string("adapter/mlp.") + dir + "/";
    out.push_back({base + "xi1_weight", m->xi1_weight.detach()});
    out.push_back({base + "xi1_bias", m->xi1_bias.detach()});
    out.push_back({base + "xi2_weight", m->xi2_weight.detach()});
    out.push_back({base + "xi2_bias", m->xi2_bias.detach()});
  };
  add(mlp_l2s_, "l2s");
  add(mlp_s2l_, "s2l");
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ZooModel& receiver(const ModelPair& models, Direction d) { return d == Direction::l2s ? *models.target : *models.source; }

const std::string& receiving_slot(const SlotPair& pair, Direction d) {
  return d == Direction::l2s ? pair.target_slot : pair.source_slot;
}

void write_slot(ZooModel& model, const std::string& slot, const Tensor& value, const PairAdapter& adapter) {
  NoGradScope ng;
  if (!model.is_factorized(slot)) {
    Layer& layer = model.layer(slot);
    std::get<Tensor>(layer.weight).assign(value);
    return;
  }
  LowRankParam& f = model.factors(slot);
  if (adapter.kind() == AdapterKind::mlp) {
    const Reencoded re = reencode_truncated_svd(value, f.rank(), adapter.options().svd, slot);
    f.b.assign(re.param.b);
    f.a.assign(re.param.a);
  } else {
    f.a.assign(value);
  }
}

}  // namespace

Tensor current_value(const TransferEvent& ev, const ModelPair& models, const PairAdapter& adapter) {
  return adapter.read_slot(receiver(models, ev.direction), receiving_slot(adapter.pair(), ev.direction));
}

Tensor adapter_delta(const TransferEvent& ev, const ModelPair& models, const PairAdapter& adapter) {
  const Tensor cur = current_value(ev, models, adapter);
  if (ev.generated.shape() != cur.shape()) {
    throw ContractError("adapter_update: no snapshot matching slot " + receiving_slot(adapter.pair(), ev.direction));
  }
  return subtract_values(ev.generated, cur);
}

std::vector<TransferEvent> transfer_step(const TransferPlan& plan, ModelPair models, std::vector<PairAdapter>& adapters,
                                         std::size_t step, Direction scheduled) {
  if (plan.frozen_source && includes(scheduled, Direction::s2l)) {
    throw PlanError("transfer_step: frozen source cannot receive an s2l transfer");
  }
  if (adapters.size() != plan.pairs.size()) throw ContractError("transfer_step: one adapter per pair is required");
  std::vector<TransferEvent> events;
  for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
    PairAdapter& adapter = adapters[i];
    const SlotPair& pair = plan.pairs[i];
    const Tensor src_in = adapter.read_slot(*models.source, pair.source_slot);
    const Tensor tgt_in = adapter.read_slot(*models.target, pair.target_slot);
    std::pair<Tensor, Tensor> gen;
    {
      NoGradScope ng;
      gen = adapter.generate(src_in, tgt_in, scheduled);
    }
    for (Direction d : {Direction::l2s, Direction::s2l}) {
      if (!includes(scheduled, d)) continue;
      TransferEvent ev;
      ev.step = step;
      ev.pair_index = i;
      ev.direction = d;
      ev.generated_with = scheduled;
      ev.source_input = src_in;
      ev.target_input = tgt_in;
      ev.pre = d == Direction::l2s ? tgt_in : src_in;
      ev.generated = (d == Direction::l2s ? gen.second : gen.first).detach();
      events.push_back(std::move(ev));
    }
    // Writes happen after both outputs exist so a bidirectional step reads
    // only pre-transfer values.
    for (const auto& ev : events) {
      if (ev.pair_index != i) continue;
      if (adapter.kind() == AdapterKind::copy_share && models.source->is_factorized(pair.source_slot) &&
          models.target->is_factorized(pair.target_slot)) {
        // Factor-wise sharing: b as well as a.
        ZooModel& to = receiver(models, ev.direction);
        const ZooModel& from = ev.direction == Direction::l2s ? *models.source : *models.target;
        const std::string& from_slot = ev.direction == Direction::l2s ? pair.source_slot : pair.target_slot;
        LowRankParam& dst = to.factors(receiving_slot(pair, ev.direction));
        copy_overlap(from.factors(from_slot).b, dst.b);
        dst.a.assign(ev.generated);
      } else {
        write_slot(receiver(models, ev.direction), receiving_slot(pair, ev.direction), ev.generated, adapter);
      }
    }
  }
  return events;
}

void adapter_update(const std::vector<TransferEvent>& events, const ModelPair& models,
                    std::vector<PairAdapter>& adapters, Scalar eta) {
  std::map<std::size_t, std::vector<const TransferEvent*>> by_pair;
  for (const auto& ev : events) {
    if (ev.pair_index >= adapters.size()) throw ContractError("adapter_update: event for unknown pair");
    by_pair[ev.pair_index].push_back(&ev);
  }
  for (auto& [index, evs] : by_pair) {
    PairAdapter& adapter = adapters[index];
    auto params = adapter.parameters();
    if (params.empty()) continue;
    std::vector<Tensor> deltas;
    for (const auto* ev : evs) deltas.push_back(adapter_delta(*ev, models, adapter));
    for (auto p : params) p.zero_grad();
    GradTape tape;
    Tensor objective;
    {
      TapeScope scope(tape);
      for (std::size_t k = 0; k < evs.size(); ++k) {
        const auto* ev = evs[k];
        Tensor out = adapter.generate_for(ev->source_input, ev->target_input, ev->generated_with, ev->direction);
        Tensor term = dot(out, deltas[k]);
        objective = k == 0 ? term : add(objective, term);
      }
    }
    if (tape.size() > 0) tape.backward(objective);
    sgd_apply(params, eta);
  }
}

// ---------------------------------------------------------------------------

Scalar self_learning_step(ZooModel& model, const Batch& batch, Scalar eta, const LossFn& loss_fn) {
  auto params = model.parameters();
  for (auto p : params) p.zero_grad();
  GradTape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    const Tensor logits = model.forward(batch.inputs);
    loss = loss_fn ? loss_fn(logits, batch) : cross_entropy(logits, batch.labels);
  }
  const Scalar value = loss.item();
  if (!std::isfinite(value)) throw NonFiniteError("self-learning step produced a non-finite loss (" + format_number(value) + ")");
  if (tape.size() > 0) tape.backward(loss);
  sgd_apply(params, eta);
  return value;
}

Accuracy evaluate(const ZooModel& model, const Dataset& data) {
  NoGradScope ng;
  const std::size_t n = data.size();
  if (n == 0) return {};
  const std::size_t k5 = std::min<std::size_t>(5, model.classes());
  std::size_t hit1 = 0, hit5 = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    const Tensor logits = model.forward(slice_rows(data.inputs, begin, end));
    std::span<const int> labels(data.labels.data() + begin, end - begin);
    hit1 += topk_hits(logits, labels, 1);
    hit5 += topk_hits(logits, labels, k5);
  }
  return {Scalar(hit1) / Scalar(n), Scalar(hit5) / Scalar(n)};
}

// ---------------------------------------------------------------------------

std::string run_record_header() { return "step,phase,model_id,loss,top1,top5,omega_1,omega_2,omega_3,omega_4"; }

std::string format_run_record(const RunRecord& r) {
  std::string s = std::to_string(r.step) + "," + r.phase + "," + r.model_id + "," + format_number(r.loss) + "," +
                  format_optional(r.top1) + "," + format_optional(r.top5);
  for (const auto& w : r.omega) s += "," + format_optional(w);
  return s;
}

std::string format_run_records(const std::vector<RunRecord>& records) {
  std::string out = run_record_header() + "\n";
  for (const auto& r : records) out += format_run_record(r) + "\n";
  return out;
}

std::vector<RunRecord> parse_run_records(const std::string& csv) {
  const auto lines = split_lines(csv);
  if (lines.empty() || lines[0] != run_record_header()) {
    throw FormatError("records line 1: expected header \"" + run_record_header() + "\"");
  }
  std::vector<RunRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = "records line " + std::to_string(i + 1) + ": ";
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 10) throw FormatError(where + "expected 10 fields, got " + std::to_string(f.size()));
    RunRecord r;
    const auto step = parse_number(f[0]);
    if (!step || *step < 0 || *step != std::floor(*step)) throw FormatError(where + "bad step \"" + f[0] + "\"");
    r.step = static_cast<std::size_t>(*step);
    if (f[1] != "transfer" && f[1] != "self") throw FormatError(where + "bad phase \"" + f[1] + "\"");
    r.phase = f[1];
    if (f[2].empty()) throw FormatError(where + "empty model_id");
    r.model_id = f[2];
    const auto loss = parse_number(f[3]);
    if (!loss) throw FormatError(where + "bad loss \"" + f[3] + "\"");
    r.loss = Scalar(*loss);
    auto opt = [&](const std::string& field, const char* name) -> std::optional<Scalar> {
      if (field.empty()) return std::nullopt;
      const auto v = parse_number(field);
      if (!v) throw FormatError(where + "bad " + name + " \"" + field + "\"");
      return Scalar(*v);
    };
    r.top1 = opt(f[4], "top1");
    r.top5 = opt(f[5], "top5");
    for (std::size_t k = 0; k < 4; ++k) r.omega[k] = opt(f[6 + k], "omega");
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

bool eval_due(std::size_t t, std::size_t last, std::size_t eval_every) {
  return t == last || (eval_every > 0 && t % eval_every == 0);
}

void fill_eval(RunRecord& rec, const TrainedModel& m, std::size_t t, std::size_t last, std::size_t eval_every) {
  if (m.test == nullptr || !eval_due(t, last, eval_every)) return;
  const Accuracy acc = evaluate(*m.model, *m.test);
  rec.top1 = acc.top1;
  rec.top5 = acc.top5;
}

std::array<std::optional<Scalar>, 4> omega_of(const std::vector<PairAdapter>& adapters, Direction receiving) {
  std::array<std::optional<Scalar>, 4> out;
  if (adapters.empty() || adapters[0].ktl() == nullptr) return out;
  const KtlStack& stack = *adapters[0].ktl();
  if (stack.variant() == LpkaVariant::avg_attn) return out;
  const KtlLayer& layer = stack.layers().back();
  const auto& adapter = receiving == Direction::l2s ? layer.to_small : layer.to_large;
  if (!adapter) return out;
  const auto w = adapter->omega_values();
  const std::size_t n = stack.variant() == LpkaVariant::row_only ? 1 : 4;
  for (std::size_t k = 0; k < n; ++k) out[k] = w[k];
  return out;
}

}  // namespace

std::vector<RunRecord> run_training(const TransferPlan& plan, TrainedModel source, TrainedModel target,
                                    std::vector<PairAdapter>& adapters, const TrainingOptions& opts,
                                    const StepObserver& observer) {
  plan.validate();
  if (target.model == nullptr || target.stream == nullptr) throw ContractError("run_training: target model and stream required");
  if (source.model == nullptr) throw ContractError("run_training: source model required");
  const bool self_transfer = source.model == target.model;
  const bool source_trains = !self_transfer && !plan.frozen_source;
  if (source_trains && source.stream == nullptr) throw ContractError("run_training: source stream required");
  if (plan.frozen_source && !self_transfer) source.model->set_trainable(false);
  if (opts.kind == AdapterKind::kd && self_transfer) throw PlanError("kd needs two models");

  const bool transfers = moves_parameters(opts.kind) && !plan.pairs.empty();
  if (transfers && adapters.size() != plan.pairs.size()) throw ContractError("run_training: one adapter per pair is required");

  const ModelPair models{source.model, target.model};
  // pending[2*pair + (0 for l2s, 1 for s2l)]: last event written into that slot
  std::vector<std::optional<TransferEvent>> pending(2 * plan.pairs.size());
  auto pending_index = [](std::size_t pair, Direction d) { return 2 * pair + (d == Direction::l2s ? 0 : 1); };

  const std::size_t first = plan.literal_t0 ? 0 : 1;
  const std::size_t last = first + opts.total_steps - 1;
  std::vector<RunRecord> records;
  records.reserve(opts.total_steps * 2);

  for (std::size_t t = first; opts.total_steps > 0 && t <= last; ++t) {
    bool l2s = false, s2l = false;
    if (transfers) {
      l2s = includes(plan.directions, Direction::l2s) &&
            should_transfer(t, plan.t_cycle, plan.target_ratio, plan.literal_t0);
      s2l = includes(plan.directions, Direction::s2l) &&
            should_transfer(t, plan.t_cycle, plan.source_ratio, plan.literal_t0);
    }
    if (l2s || s2l) {
      const Direction scheduled = l2s && s2l ? Direction::both : (l2s ? Direction::l2s : Direction::s2l);
      std::vector<TransferEvent> previous;
      for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
        for (Direction d : {Direction::l2s, Direction::s2l}) {
          auto& slot = pending[pending_index(i, d)];
          if (includes(scheduled, d) && slot) previous.push_back(std::move(*slot));
        }
      }
      if (!previous.empty()) adapter_update(previous, models, adapters, plan.eta_adapter);
      for (auto& ev : transfer_step(plan, models, adapters, t, scheduled)) {
        const std::size_t k = pending_index(ev.pair_index, ev.direction);
        pending[k] = std::move(ev);
      }
    }

    std::vector<RunRecord> rows;
    Tensor teacher_logits;
    if (source_trains) {
      const Batch batch = source.stream->next();
      RunRecord rec;
      rec.step = t;
      rec.phase = s2l ? "transfer" : "self";
      rec.model_id = source.id;
      rec.loss = self_learning_step(*source.model, batch, plan.eta_source);
      fill_eval(rec, source, t, last, opts.eval_every);
      if (is_lpka(opts.kind) && transfers) rec.omega = omega_of(adapters, Direction::s2l);
      rows.push_back(std::move(rec));
    }
    {
      const Batch batch = target.stream->next();
      LossFn loss_fn;
      if (opts.kind == AdapterKind::kd) {
        {
          NoGradScope ng;
          teacher_logits = source.model->forward(batch.inputs);
        }
        loss_fn = [&](const Tensor& logits, const Batch& b) {
          return kd_loss(logits, teacher_logits, opts.kd_temperature, opts.kd_alpha, b.labels);
        };
      }
      RunRecord rec;
      rec.step = t;
      rec.phase = l2s || (self_transfer && s2l) ? "transfer" : "self";
      rec.model_id = target.id;
      rec.loss = self_learning_step(*target.model, batch, plan.eta_target, loss_fn);
      fill_eval(rec, target, t, last, opts.eval_every);
      if (is_lpka(opts.kind) && transfers) rec.omega = omega_of(adapters, Direction::l2s);
      rows.push_back(std::move(rec));
    }
    if (observer) observer(t, rows);
    for (auto& r : rows) records.push_back(std::move(r));
  }
  return records;
}

std::vector<RunRecord> train_vanilla(std::vector<TrainedModel> models, const TrainingOptions& opts) {
  for (const auto& m : models) {
    if (m.model == nullptr || m.stream == nullptr) throw ContractError("train_vanilla: model and stream required");
  }
  std::vector<RunRecord> records;
  for (std::size_t t = 1; t <= opts.total_steps; ++t) {
    for (auto& m : models) {
      const Batch batch = m.stream->next();
      RunRecord rec;
      rec.step = t;
      rec.phase = "self";
      rec.model_id = m.id;
      rec.loss = self_learning_step(*m.model, batch, m.lr);
      fill_eval(rec, m, t, opts.total_steps, opts.eval_every);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

// ---------------------------------------------------------------------------

std::size_t InferenceBundle::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : models) n += m.parameter_count();
  return n;
}

std::vector<CheckpointEntry> InferenceBundle::checkpoint_entries() const {
  std::vector<CheckpointEntry> out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (auto& e : models[i].checkpoint_entries()) {
      e.slot_id = ids[i] + "/" + e.slot_id;
      out.push_back(std::move(e));
    }
  }
  return out;
}

const ZooModel& InferenceBundle::model(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return models[i];
  }
  throw ContractError("inference bundle has no model \"" + id + "\"");
}

InferenceBundle strip_adapter(const std::vector<std::pair<std::string, const ZooModel*>>& models) {
  InferenceBundle out;
  for (const auto& [id, m] : models) {
    out.ids.push_back(id);
    out.models.push_back(m->clone());
  }
  return out;
}

}  // namespace mergenet

#ifndef MERGENET_TRANSFER_HPP
#define MERGENET_TRANSFER_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mergenet/data.hpp"
#include "mergenet/ktl.hpp"
#include "mergenet/mlp_adapter.hpp"
#include "mergenet/zoo.hpp"

namespace mergenet {

enum class AdapterKind { lpka_full, lpka_row_only, lpka_avg, mlp, copy_share, kd, none };
const char* adapter_kind_name(AdapterKind k);
AdapterKind parse_adapter_kind(const std::string& s);
bool is_lpka(AdapterKind k);
/// True for kinds that own trainable adapter parameters.
bool has_adapter_params(AdapterKind k);

struct SlotPair {
  std::string source_slot;
  std::string target_slot;

  bool operator==(const SlotPair&) const = default;
};

/*
 * Transfer schedule and learning rates. "Source" is the model called l in
 * l2s/s2l and "target" is s. Transfers into the target (l2s) happen when
 * should_transfer(t, t_cycle, target_ratio) holds; transfers into the source
 * (s2l) use source_ratio.
 */
struct TransferPlan {
  std::vector<SlotPair> pairs;
  Direction directions = Direction::both;
  std::size_t t_cycle = 4;
  std::size_t source_ratio = 1;
  std::size_t target_ratio = 1;
  bool frozen_source = false;
  /// Count steps from 0 so a transfer also fires at t = 0.
  bool literal_t0 = false;
  Scalar eta_adapter = Scalar(0.05);
  Scalar eta_source = Scalar(0.05);
  Scalar eta_target = Scalar(0.05);

  /// Throws PlanError on an inconsistent plan.
  void validate() const;
};

/// t mod (t_cycle * ratio) == 0. Steps are 1-based unless literal_t0.
bool should_transfer(std::size_t t, std::size_t t_cycle, std::size_t ratio, bool literal_t0 = false);
/// Number of transfer events over a horizon of `horizon` steps.
std::size_t count_transfer_events(std::size_t horizon, std::size_t t_cycle, std::size_t ratio, bool literal_t0 = false);

struct AdapterOptions {
  std::size_t rank = 8;
  std::size_t attn_dim = 16;
  std::size_t layers = 1;
  bool omega_trainable = true;
  bool residual = false;
  SvdOptions svd;
};

/*
 * The adapter bound to one slot pair. LPKA kinds read and write the a factor
 * of each slot; the MLP kind reads dense weights and writes the target back
 * re-encoded at the plan rank. copy_share owns no parameters.
 */
class PairAdapter {
 public:
  static PairAdapter make(AdapterKind kind, const SlotPair& pair, const ZooModel& source, const ZooModel& target,
                          const AdapterOptions& opts, Direction available, Rng& rng);

  AdapterKind kind() const { return kind_; }
  const SlotPair& pair() const { return pair_; }
  const AdapterOptions& options() const { return opts_; }

  /// Transfer input read from a slot: its a factor (LPKA, copy_share) or
  /// its dense weight (MLP).
  Tensor read_slot(const ZooModel& model, const std::string& slot) const;

  /*
   * Runs the adapter for `directions` on (source input, target input) and
   * returns the new (source value, target value). A direction that was not
   * requested returns its input unchanged.
   */
  std::pair<Tensor, Tensor> generate(const Tensor& source_in, const Tensor& target_in, Direction directions) const;
  /// The output for one receiving direction of a generation run over `directions`.
  Tensor generate_for(const Tensor& source_in, const Tensor& target_in, Direction directions,
                      Direction receiving) const;

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  KtlStack* ktl() { return ktl_ ? &*ktl_ : nullptr; }
  const KtlStack* ktl() const { return ktl_ ? &*ktl_ : nullptr; }
  MlpAdapter* mlp(Direction d);

  std::vector<CheckpointEntry> checkpoint_entries() const;

 private:
  AdapterKind kind_ = AdapterKind::none;
  SlotPair pair_;
  AdapterOptions opts_;
  std::optional<KtlStack> ktl_;
  std::optional<MlpAdapter> mlp_l2s_;
  std::optional<MlpAdapter> mlp_s2l_;
};

/// One write into one receiving slot.
struct TransferEvent {
  std::size_t step = 0;
  std::size_t pair_index = 0;
  Direction direction = Direction::l2s;  // receiving side: l2s writes the target
  Direction generated_with = Direction::l2s;  // directions of the generation run
  Tensor source_input;  // what the adapter read from the source slot
  Tensor target_input;  // ... and from the target slot
  Tensor pre;           // receiving slot value before the write
  Tensor generated;     // value written
};

/// Source and target; the same object for self-transfer.
struct ModelPair {
  ZooModel* source = nullptr;
  ZooModel* target = nullptr;
};

/// Receiving slot of an event and its current value, in the adapter's space.
Tensor current_value(const TransferEvent& ev, const ModelPair& models, const PairAdapter& adapter);

/// Runs every pair for the scheduled directions and writes the results.
std::vector<TransferEvent> transfer_step(const TransferPlan& plan, ModelPair models, std::vector<PairAdapter>& adapters,
                                         std::size_t step, Direction scheduled);

/*
 * Delta-rule adapter update. For each event, delta = generated snapshot minus
 * the receiving slot's current value; the surrogate
 *   J = sum_events <generate(phi; recorded inputs), delta>
 * is differentiated under a tape and phi <- phi - eta * grad_phi J, which is
 * phi - eta * (d generated / d phi)^T delta.
 */
void adapter_update(const std::vector<TransferEvent>& events, const ModelPair& models,
                    std::vector<PairAdapter>& adapters, Scalar eta);

/// delta used by adapter_update for one event.
Tensor adapter_delta(const TransferEvent& ev, const ModelPair& models, const PairAdapter& adapter);

using LossFn = std::function<Tensor(const Tensor& logits, const Batch& batch)>;

/// Plain SGD step on every parameter that requires a gradient; returns the
/// loss before the step. Throws NonFiniteError on a NaN/Inf loss.
Scalar self_learning_step(ZooModel& model, const Batch& batch, Scalar eta, const LossFn& loss = {});

struct Accuracy {
  Scalar top1 = 0;
  Scalar top5 = 0;
};
/// Top-1 / top-min(5, classes) accuracy on a dataset, evaluated in chunks.
Accuracy evaluate(const ZooModel& model, const Dataset& data);

struct RunRecord {
  std::size_t step = 0;
  std::string phase;  // "transfer" or "self"
  std::string model_id;
  Scalar loss = 0;
  std::optional<Scalar> top1;
  std::optional<Scalar> top5;
  std::array<std::optional<Scalar>, 4> omega;

  bool operator==(const RunRecord&) const = default;
};

std::string run_record_header();
std::string format_run_record(const RunRecord& r);
std::string format_run_records(const std::vector<RunRecord>& records);
/// Parses a RunRecord CSV; throws FormatError naming the line.
std::vector<RunRecord> parse_run_records(const std::string& csv);

/// A model taking part in a run.
struct TrainedModel {
  std::string id;
  ZooModel* model = nullptr;
  BatchStream* stream = nullptr;  // null for a frozen source
  const Dataset* test = nullptr;
  Scalar lr = Scalar(0.05);  // train_vanilla only; run_training uses the plan's rates
};

struct TrainingOptions {
  std::size_t total_steps = 100;
  std::size_t eval_every = 0;  // 0: evaluate on the final step only
  AdapterKind kind = AdapterKind::lpka_full;
  Scalar kd_temperature = Scalar(4);
  Scalar kd_alpha = Scalar(0.9);
};

/// Called once per step after that step's records were produced.
using StepObserver = std::function<void(std::size_t step, const std::vector<RunRecord>& rows)>;

/*
 * Interleaved training. Per step t (1-based): when a direction is scheduled,
 * the adapter is first updated from that direction's previous event, then a
 * new transfer is generated and written; afterwards every trainable model
 * takes one self-learning step on its own batch. A frozen source neither
 * trains nor emits records. Passing the same model as source and target
 * makes a self-transfer run with a single record stream.
 */
std::vector<RunRecord> run_training(const TransferPlan& plan, TrainedModel source, TrainedModel target,
                                    std::vector<PairAdapter>& adapters, const TrainingOptions& opts,
                                    const StepObserver& observer = {});

/// Independent SGD training of each model, no transfer machinery.
std::vector<RunRecord> train_vanilla(std::vector<TrainedModel> models, const TrainingOptions& opts);

/// Model parameters only; what remains for inference once adapters are gone.
struct InferenceBundle {
  std::vector<std::string> ids;
  std::vector<ZooModel> models;

  std::size_t parameter_count() const;
  std::vector<CheckpointEntry> checkpoint_entries() const;
  const ZooModel& model(const std::string& id) const;
};

InferenceBundle strip_adapter(const std::vector<std::pair<std::string, const ZooModel*>>& models);

}  // namespace mergenet

#endif  // MERGENET_TRANSFER_HPP

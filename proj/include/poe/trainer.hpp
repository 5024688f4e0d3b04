#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "poe/biasgen.hpp"
#include "poe/model.hpp"

namespace poe {

struct TrainConfig {
  LossMode loss_mode = LossMode::CE;
  double alpha = 0.0;  // CE weight in PoE_CE
  std::size_t epochs = 8;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.1;
  // Linear warmup then linear decay to 0. Negative means "auto": 5% of the
  // total step count, the desk-scale stand-in for an absolute step budget.
  long warmup_steps = -1;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

void validate(const TrainConfig& config);

// Logits of a frozen, fully trained weak model, keyed by example id.
struct FrozenWeakLogits {
  std::unordered_map<std::uint64_t, num::LogitVector> by_id;

  const num::LogitVector& at(std::uint64_t id) const;
};

struct TrainRun {
  Model final_model;
  std::vector<std::uint64_t> example_ids;
  // [epoch][example]: probability the model assigns to the gold label at
  // the end of each epoch, in dataset order. Raw material for data maps.
  std::vector<std::vector<double>> per_epoch_gold_prob;
  std::vector<double> loss_curve;  // mean batch loss per optimizer step
  TrainConfig config;
};

// Mini-batch Adam with decoupled weight decay. Deterministic under
// (seed, config): identical inputs give bit-identical parameters.
TrainRun train(Model model, std::span<const Example> data,
               const TrainConfig& config,
               const FrozenWeakLogits* frozen = nullptr);

struct Predictions {
  std::vector<num::LogitVector> logits;
  std::vector<double> losses;  // per-example cross-entropy on own logits
  std::vector<bool> correct;   // argmax ties break toward the lowest class
};

Predictions predict_all(const Model& model, std::span<const Example> data);

double accuracy(const Predictions& preds);

struct TwoStageResult {
  TrainRun weak_run;
  FrozenWeakLogits frozen;
  TrainRun main_run;
};

// Stage A trains the weak model with CE; its logits over train and both
// eval splits are cached and frozen; stage B trains the main model against
// them. The weak model receives no updates in stage B.
TwoStageResult run_two_stage(const ModelSpec& weak_spec,
                             const ModelSpec& main_spec,
                             const DatasetBundle& bundle,
                             const TrainConfig& weak_cfg,
                             const TrainConfig& main_cfg);

// CSV export of the per-epoch dynamics: example_id,epoch,gold_prob.
void write_dynamics_csv(const TrainRun& run, std::ostream& os);

// Rebuilds example_ids and per_epoch_gold_prob from an exported CSV; the
// other TrainRun fields are left default.
TrainRun read_dynamics_csv(std::istream& is);

}  // namespace poe

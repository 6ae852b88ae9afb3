#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adacap/data_io.hpp"
#include "adacap/seq_model.hpp"

namespace adacap {

// ---------------------------------------------------------------------------
// Training strategies.
//   SrcOnly / TgtOnly — single head, one domain's data.
//   All               — single head, both domains pooled.
//   FineTune          — single head: source to early stop, Adam reset, target.
//   Dual              — per-domain output matrices over a shared trunk.
//   Proposed          — augmented head trained on the decomposed upper bound:
//                       source batches touch theta_g/theta_s, target batches
//                       theta_g/theta_t, interleaved per epoch.
// ---------------------------------------------------------------------------

enum class Strategy { SrcOnly, TgtOnly, All, FineTune, Dual, Proposed };

// Canonical lowercase key used in config files and CSVs.
const char* strategy_name(Strategy s);
// Mixed-case label for report tables.
const char* strategy_display(Strategy s);
Strategy parse_strategy(const std::string& name);
const std::vector<Strategy>& all_strategies();

struct TrainConfig {
  Strategy strategy = Strategy::TgtOnly;
  int cell_size = 300;
  int batch_size = 16;
  int max_epochs = 100;
  int patience = 3;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;  // global gradient-norm cap; 0 disables
  double alpha = 1e-3;     // Adam hyperparameters
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // FineTune phase-2 budget; negative means "use max_epochs".
  int finetune_target_max_epochs = -1;
};

// ---------------------------------------------------------------------------
// Adam with bias correction. State is flat over the concatenated parameter
// tensors in tensor_views() order; t advances once per update.
// ---------------------------------------------------------------------------

struct AdamState {
  double alpha = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;
  Vec m, v;
};

AdamState make_adam_state(std::size_t n, double alpha = 1e-3, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);

// One update on a flat parameter block.
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads);
// One update over a whole model (t advances once across all tensors).
void adam_step_model(AdamState& state, ModelParams& params, const ModelGrads& grads);

// ---------------------------------------------------------------------------
// Scheduling and early stopping
// ---------------------------------------------------------------------------

// Shuffled batch-origin sequence: n_source_batches Source tags interleaved
// with n_target_batches Target tags. One epoch consumes all data once.
std::vector<DomainTag> epoch_schedule(Rng& rng, std::size_t n_source_batches,
                                      std::size_t n_target_batches);

// True once the best dev loss is `patience` epochs stale. The caller keeps
// the best-dev parameters, not the last.
bool early_stop(const std::vector<double>& dev_losses, int patience);

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;  // 1-based; numbering continues across FineTune phases
  double source_train_loss = std::numeric_limits<double>::quiet_NaN();
  double target_train_loss = std::numeric_limits<double>::quiet_NaN();
  double dev_loss = std::numeric_limits<double>::quiet_NaN();
  double bound_gap_mean = std::numeric_limits<double>::quiet_NaN();
};

struct RunMetrics {
  Strategy strategy = Strategy::TgtOnly;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // epoch whose weights were returned; phase start = one less
  double best_dev_loss = std::numeric_limits<double>::quiet_NaN();
  int finetune_switch_epoch = 0;  // last source-phase epoch (FineTune only)
  double train_seconds = 0.0;
};

// Raised when a training loss goes non-finite; carries where.
struct NumericError : std::runtime_error {
  int epoch;
  int batch;
  NumericError(const std::string& what, int epoch_, int batch_)
      : std::runtime_error(what), epoch(epoch_), batch(batch_) {}
};

// ---------------------------------------------------------------------------
// Phase runner — the shared core under every strategy, public so training can
// be resumed from a checkpoint (fresh AdamState + the documented RNG stream
// reproduce an uninterrupted run exactly).
//
// RNG streams used by run_strategy: parameter init draws from
// Rng(mix_seed(seed, 0)); the first training phase shuffles with
// Rng(mix_seed(seed, 1)); FineTune's target phase with Rng(mix_seed(seed, 2)).
// ---------------------------------------------------------------------------

struct PoolItem {
  const Example* ex = nullptr;
  DomainTag tag = DomainTag::Target;
};

enum class BatchObjective { ExactCe, Bound };

struct PhaseConfig {
  BatchObjective objective = BatchObjective::ExactCe;
  // true: single-domain batches interleaved via epoch_schedule (Dual/Proposed);
  // false: one jointly shuffled pool.
  bool by_domain = false;
  int max_epochs = 1;
  int first_epoch = 1;  // epoch number of this phase's first epoch
};

struct PhaseResult {
  int epochs_run = 0;
  int best_epoch = 0;       // epoch held by best_params; first_epoch-1 = phase start
  double best_dev = std::numeric_limits<double>::quiet_NaN();
};

// Trains params in place, appends one EpochRecord per epoch to metrics, and
// keeps the best-dev weights in best_params (the phase-start model is the
// initial candidate). Dev loss is exact per-token NLL under each dev item's
// domain tag.
PhaseResult train_phase(ModelParams& params, AdamState& adam,
                        const TrainConfig& cfg,
                        const std::vector<PoolItem>& source_pool,
                        const std::vector<PoolItem>& target_pool,
                        const std::vector<PoolItem>& dev,
                        const PhaseConfig& phase, Rng& rng, RunMetrics& metrics,
                        ModelParams& best_params);

struct RunResult {
  ModelParams params;
  RunMetrics metrics;
};

// Full training run for a strategy; returns the best-dev checkpoint.
RunResult run_strategy(const TrainConfig& cfg, const DomainDataset& source,
                       const DomainDataset& target);

}  // namespace adacap

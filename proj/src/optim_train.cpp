#include "adacap/optim_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace adacap {

// ---------------------------------------------------------------------------
// Strategy names
// ---------------------------------------------------------------------------

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::SrcOnly: return "srconly";
    case Strategy::TgtOnly: return "tgtonly";
    case Strategy::All: return "all";
    case Strategy::FineTune: return "finetune";
    case Strategy::Dual: return "dual";
    case Strategy::Proposed: return "proposed";
  }
  throw std::logic_error("unknown strategy");
}

const char* strategy_display(Strategy s) {
  switch (s) {
    case Strategy::SrcOnly: return "SrcOnly";
    case Strategy::TgtOnly: return "TgtOnly";
    case Strategy::All: return "All";
    case Strategy::FineTune: return "FineTune";
    case Strategy::Dual: return "Dual";
    case Strategy::Proposed: return "Proposed";
  }
  throw std::logic_error("unknown strategy");
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : all_strategies())
    if (name == strategy_name(s)) return s;
  throw std::invalid_argument(
      "unknown strategy '" + name +
      "' (expected srconly|tgtonly|all|finetune|dual|proposed)");
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> order = {
      Strategy::SrcOnly, Strategy::TgtOnly, Strategy::All,
      Strategy::FineTune, Strategy::Dual, Strategy::Proposed};
  return order;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState make_adam_state(std::size_t n, double alpha, double beta1,
                          double beta2, double eps) {
  if (alpha <= 0.0 || eps <= 0.0) throw std::invalid_argument("alpha and eps must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("betas must lie in [0, 1)");
  AdamState s;
  s.alpha = alpha;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

namespace {

// Update one block at `offset` into the moment vectors; c1/c2 are the
// bias-correction denominators for the already-advanced step counter.
void adam_apply(AdamState& s, std::size_t offset, std::span<double> p,
                std::span<const double> g, double c1, double c2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    double& m = s.m[offset + i];
    double& v = s.v[offset + i];
    m = s.beta1 * m + (1.0 - s.beta1) * g[i];
    v = s.beta2 * v + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    p[i] -= s.alpha * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

std::pair<double, double> advance(AdamState& s) {
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  return {c1, c2};
}

}  // namespace

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step shape mismatch");
  const auto [c1, c2] = advance(state);
  adam_apply(state, 0, params, grads, c1, c2);
}

void adam_step_model(AdamState& state, ModelParams& params, const ModelGrads& grads) {
  auto pv = tensor_views(params);
  auto gv = tensor_views(grads);
  if (pv.size() != gv.size()) throw std::invalid_argument("adam_step shape mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i].size() != gv[i].size())
      throw std::invalid_argument("adam_step shape mismatch");
    total += pv[i].size();
  }
  if (total != state.m.size()) throw std::invalid_argument("adam_step shape mismatch");
  const auto [c1, c2] = advance(state);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    adam_apply(state, offset, pv[i], gv[i], c1, c2);
    offset += pv[i].size();
  }
}

// ---------------------------------------------------------------------------
// Scheduling and early stopping
// ---------------------------------------------------------------------------

std::vector<DomainTag> epoch_schedule(Rng& rng, std::size_t n_source_batches,
                                      std::size_t n_target_batches) {
  std::vector<DomainTag> order;
  order.reserve(n_source_batches + n_target_batches);
  order.insert(order.end(), n_source_batches, DomainTag::Source);
  order.insert(order.end(), n_target_batches, DomainTag::Target);
  rng.shuffle(order);
  return order;
}

bool early_stop(const std::vector<double>& dev_losses, int patience) {
  if (dev_losses.empty()) throw std::invalid_argument("no dev losses recorded");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dev_losses.size(); ++i)
    if (dev_losses[i] < dev_losses[best]) best = i;
  return dev_losses.size() - 1 - best >= static_cast<std::size_t>(patience);
}

// ---------------------------------------------------------------------------
// Phase runner
// ---------------------------------------------------------------------------

namespace {

void zero_out(ModelGrads& g) {
  for (auto view : tensor_views(g)) std::fill(view.begin(), view.end(), 0.0);
}

void scale_all(ModelGrads& g, double s) {
  for (auto view : tensor_views(g))
    for (double& x : view) x *= s;
}

double global_norm(const ModelGrads& g) {
  double sq = 0.0;
  for (auto view : tensor_views(g))
    for (double x : view) sq += x * x;
  return std::sqrt(sq);
}

double dev_nll_per_token(const ModelParams& params, const std::vector<PoolItem>& dev) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& item : dev) {
    nll += sequence_nll(params, item.ex->ctx, item.ex->tokens, item.tag);
    tokens += item.ex->tokens.size() - 1;
  }
  return nll / static_cast<double>(tokens);
}

std::vector<const PoolItem*> shuffled_ptrs(const std::vector<PoolItem>& pool, Rng& rng) {
  std::vector<const PoolItem*> ptrs;
  ptrs.reserve(pool.size());
  for (const auto& item : pool) ptrs.push_back(&item);
  rng.shuffle(ptrs);
  return ptrs;
}

std::vector<std::vector<const PoolItem*>> chunk(std::vector<const PoolItem*>&& items,
                                                std::size_t batch_size) {
  std::vector<std::vector<const PoolItem*>> batches;
  for (std::size_t i = 0; i < items.size(); i += batch_size) {
    const std::size_t end = std::min(items.size(), i + batch_size);
    batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                         items.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace

PhaseResult train_phase(ModelParams& params, AdamState& adam,
                        const TrainConfig& cfg,
                        const std::vector<PoolItem>& source_pool,
                        const std::vector<PoolItem>& target_pool,
                        const std::vector<PoolItem>& dev,
                        const PhaseConfig& phase, Rng& rng, RunMetrics& metrics,
                        ModelParams& best_params) {
  if (phase.max_epochs < 1) throw std::invalid_argument("phase needs max_epochs >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (cfg.patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (source_pool.empty() && target_pool.empty())
    throw std::invalid_argument("no training examples");
  if (dev.empty()) throw std::invalid_argument("early stopping needs a dev set");
  if (phase.objective == BatchObjective::Bound &&
      params.head.kind() != HeadKind::Augmented)
    throw std::invalid_argument("bound objective needs an augmented head");

  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

  // The incoming model is the initial best candidate, so a phase that never
  // improves dev loss hands back its starting point (matters for FineTune).
  PhaseResult result;
  result.best_epoch = phase.first_epoch - 1;
  result.best_dev = dev_nll_per_token(params, dev);
  best_params = params;

  std::vector<double> dev_seq;
  ModelGrads acc = zero_grads(params);

  for (int e = 0; e < phase.max_epochs; ++e) {
    const int epoch = phase.first_epoch + e;

    // Fixed RNG consumption order: source shuffle, target shuffle, schedule.
    std::vector<std::vector<const PoolItem*>> batches;
    if (phase.by_domain) {
      auto src_batches = chunk(shuffled_ptrs(source_pool, rng), batch_size);
      auto tgt_batches = chunk(shuffled_ptrs(target_pool, rng), batch_size);
      const auto order = epoch_schedule(rng, src_batches.size(), tgt_batches.size());
      batches.reserve(order.size());
      std::size_t si = 0, ti = 0;
      for (DomainTag tag : order)
        batches.push_back(std::move(tag == DomainTag::Source ? src_batches[si++]
                                                             : tgt_batches[ti++]));
    } else {
      std::vector<const PoolItem*> combined;
      combined.reserve(source_pool.size() + target_pool.size());
      for (const auto& item : source_pool) combined.push_back(&item);
      for (const auto& item : target_pool) combined.push_back(&item);
      rng.shuffle(combined);
      batches = chunk(std::move(combined), batch_size);
    }

    double loss_sum[2] = {0.0, 0.0};  // indexed by DomainTag
    std::size_t token_sum[2] = {0, 0};
    double gap_sum = 0.0;

    int batch_no = 0;
    for (const auto& batch : batches) {
      ++batch_no;
      zero_out(acc);
      double batch_loss = 0.0;
      for (const PoolItem* item : batch) {
        const Tape tape = trunk_forward(params, item->ex->ctx, item->ex->tokens);
        const SeqLossResult r =
            phase.objective == BatchObjective::Bound
                ? sequence_bound_backward(params, tape, item->tag, acc)
                : sequence_ce_backward(params, tape, item->tag, acc);
        batch_loss += r.loss;
        const int d = item->tag == DomainTag::Source ? 0 : 1;
        loss_sum[d] += r.loss;
        token_sum[d] += r.n_pred;
        gap_sum += r.bound_gap_sum;
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite training loss", epoch, batch_no);
      scale_all(acc, 1.0 / static_cast<double>(batch.size()));
      if (cfg.clip_norm > 0.0) {
        const double norm = global_norm(acc);
        if (norm > cfg.clip_norm) scale_all(acc, cfg.clip_norm / norm);
      }
      adam_step_model(adam, params, acc);
    }

    const double dev_loss = dev_nll_per_token(params, dev);
    dev_seq.push_back(dev_loss);

    EpochRecord rec;
    rec.epoch = epoch;
    if (token_sum[0] > 0)
      rec.source_train_loss = loss_sum[0] / static_cast<double>(token_sum[0]);
    if (token_sum[1] > 0)
      rec.target_train_loss = loss_sum[1] / static_cast<double>(token_sum[1]);
    rec.dev_loss = dev_loss;
    if (phase.objective == BatchObjective::Bound)
      rec.bound_gap_mean = gap_sum / static_cast<double>(token_sum[0] + token_sum[1]);
    metrics.epochs.push_back(rec);
    result.epochs_run = e + 1;

    if (dev_loss < result.best_dev) {
      result.best_dev = dev_loss;
      result.best_epoch = epoch;
      best_params = params;
    }
    if (early_stop(dev_seq, cfg.patience)) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// run_strategy
// ---------------------------------------------------------------------------

namespace {

std::vector<PoolItem> make_pool(const std::vector<Example>& examples, DomainTag tag) {
  std::vector<PoolItem> pool;
  pool.reserve(examples.size());
  for (const auto& ex : examples) pool.push_back({&ex, tag});
  return pool;
}

void require_train(const DomainDataset& ds, Strategy s) {
  if (ds.train.empty())
    throw std::invalid_argument(std::string("strategy ") + strategy_name(s) +
                                " requires a non-empty " +
                                domain_name(ds.domain) + " training set");
}

void require_dev(const DomainDataset& ds, Strategy s) {
  if (ds.dev.empty())
    throw std::invalid_argument(std::string("strategy ") + strategy_name(s) +
                                " requires a non-empty " +
                                domain_name(ds.domain) + " dev set");
}

void check_examples(const std::vector<Example>& examples, std::size_t ctx_dim,
                    const char* where) {
  for (const auto& ex : examples) {
    if (ex.ctx.size() != ctx_dim)
      throw std::invalid_argument(std::string("context dimension mismatch in ") + where);
  }
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.cell_size < 1) throw std::invalid_argument("cell size must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (cfg.max_epochs < 1) throw std::invalid_argument("max epochs must be >= 1");
  if (cfg.patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (cfg.clip_norm < 0.0) throw std::invalid_argument("clip must be >= 0");
  make_adam_state(0, cfg.alpha, cfg.beta1, cfg.beta2, cfg.eps);  // hyper checks
}

}  // namespace

RunResult run_strategy(const TrainConfig& cfg, const DomainDataset& source,
                       const DomainDataset& target) {
  validate_config(cfg);
  const Strategy s = cfg.strategy;
  const auto start = std::chrono::steady_clock::now();

  const bool uses_source =
      s == Strategy::SrcOnly || s == Strategy::FineTune || s == Strategy::Dual ||
      s == Strategy::Proposed || (s == Strategy::All && !source.train.empty());
  const bool uses_target = s != Strategy::SrcOnly;

  switch (s) {
    case Strategy::SrcOnly:
      require_train(source, s);
      require_dev(source, s);
      break;
    case Strategy::TgtOnly:
      require_train(target, s);
      require_dev(target, s);
      break;
    case Strategy::All:
      if (source.train.empty() && target.train.empty())
        throw std::invalid_argument("strategy all requires training data in some domain");
      require_dev(target, s);
      break;
    case Strategy::FineTune:
    case Strategy::Dual:
    case Strategy::Proposed:
      require_train(source, s);
      require_train(target, s);
      require_dev(target, s);
      if (s == Strategy::FineTune) require_dev(source, s);
      break;
  }

  const Vocab* vocab = nullptr;
  if (uses_source) {
    if (!source.vocab) throw std::invalid_argument("source dataset has no vocab");
    vocab = source.vocab.get();
  }
  if (uses_target) {
    if (!target.vocab) throw std::invalid_argument("target dataset has no vocab");
    if (vocab && vocab->hash() != target.vocab->hash())
      throw std::invalid_argument("vocabulary mismatch between source and target datasets");
    if (!vocab) vocab = target.vocab.get();
  }

  ModelDims dims;
  dims.vocab = vocab->size();
  dims.cell = static_cast<std::size_t>(cfg.cell_size);
  dims.ctx = uses_target && !target.train.empty() ? target.train.front().ctx.size()
                                                  : source.train.front().ctx.size();
  if (uses_source) {
    check_examples(source.train, dims.ctx, "source train");
    check_examples(source.dev, dims.ctx, "source dev");
  }
  if (uses_target) {
    check_examples(target.train, dims.ctx, "target train");
    check_examples(target.dev, dims.ctx, "target dev");
  }

  HeadKind kind = HeadKind::Single;
  if (s == Strategy::Dual) kind = HeadKind::Dual;
  if (s == Strategy::Proposed) kind = HeadKind::Augmented;

  Rng init_rng(mix_seed(cfg.seed, 0));
  ModelParams params = init_model_params(dims, kind, init_rng);
  AdamState adam = make_adam_state(total_param_count(params), cfg.alpha, cfg.beta1,
                                   cfg.beta2, cfg.eps);

  RunMetrics metrics;
  metrics.strategy = s;
  metrics.seed = cfg.seed;

  const std::vector<PoolItem> src_pool = make_pool(source.train, DomainTag::Source);
  const std::vector<PoolItem> tgt_pool = make_pool(target.train, DomainTag::Target);
  const std::vector<PoolItem> src_dev = make_pool(source.dev, DomainTag::Source);
  const std::vector<PoolItem> tgt_dev = make_pool(target.dev, DomainTag::Target);
  const std::vector<PoolItem> empty;

  ModelParams best = params;
  PhaseResult final_phase;
  Rng phase_rng(mix_seed(cfg.seed, 1));

  PhaseConfig phase;
  phase.max_epochs = cfg.max_epochs;

  switch (s) {
    case Strategy::SrcOnly:
      final_phase = train_phase(params, adam, cfg, src_pool, empty, src_dev, phase,
                                phase_rng, metrics, best);
      break;
    case Strategy::TgtOnly:
      final_phase = train_phase(params, adam, cfg, empty, tgt_pool, tgt_dev, phase,
                                phase_rng, metrics, best);
      break;
    case Strategy::All:
      final_phase = train_phase(params, adam, cfg, src_pool, tgt_pool, tgt_dev, phase,
                                phase_rng, metrics, best);
      break;
    case Strategy::Dual:
    case Strategy::Proposed:
      phase.by_domain = true;
      phase.objective =
          s == Strategy::Proposed ? BatchObjective::Bound : BatchObjective::ExactCe;
      final_phase = train_phase(params, adam, cfg, src_pool, tgt_pool, tgt_dev, phase,
                                phase_rng, metrics, best);
      break;
    case Strategy::FineTune: {
      final_phase = train_phase(params, adam, cfg, src_pool, empty, src_dev, phase,
                                phase_rng, metrics, best);
      metrics.finetune_switch_epoch = final_phase.epochs_run;
      params = best;  // continue from the best source-phase checkpoint
      const int target_epochs = cfg.finetune_target_max_epochs >= 0
                                    ? cfg.finetune_target_max_epochs
                                    : cfg.max_epochs;
      if (target_epochs > 0) {
        adam = make_adam_state(total_param_count(params), cfg.alpha, cfg.beta1,
                               cfg.beta2, cfg.eps);
        Rng target_rng(mix_seed(cfg.seed, 2));
        PhaseConfig phase2;
        phase2.max_epochs = target_epochs;
        phase2.first_epoch = final_phase.epochs_run + 1;
        final_phase = train_phase(params, adam, cfg, empty, tgt_pool, tgt_dev,
                                  phase2, target_rng, metrics, best);
      }
      break;
    }
  }

  metrics.best_epoch = final_phase.best_epoch;
  metrics.best_dev_loss = final_phase.best_dev;
  metrics.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(best), std::move(metrics)};
}

}  // namespace adacap

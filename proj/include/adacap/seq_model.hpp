#pragma once

#include <span>
#include <vector>

#include "adacap/adapt_heads.hpp"
#include "adacap/math_core.hpp"
#include "adacap/tokens.hpp"

namespace adacap {

// ---------------------------------------------------------------------------
// Context-conditioned LSTM generator. Per the printed model, the cell has
// three gates and a memory cell with no bias terms:
//   i = sigmoid(W_ix u + W_ih h_prev)
//   f = sigmoid(W_fx u + W_fh h_prev)
//   o = sigmoid(W_ox u + W_oh h_prev)
//   g = tanh(W_gx u + W_gh h_prev)
//   c = f . c_prev + i . g
//   h = o . tanh(c)
// All vectors share the cell size n; the word embedding dimension equals n.
// Step 0 consumes u_0 = W0 * ctx; step t >= 1 consumes the embedding of the
// previous token. Predictions start at step 1 (conditioned on BOS).
// ---------------------------------------------------------------------------

struct LstmParams {
  Matrix W_ix, W_ih, W_fx, W_fh, W_ox, W_oh, W_gx, W_gh;  // each n x n

  explicit LstmParams(std::size_t n = 0)
      : W_ix(n, n), W_ih(n, n), W_fx(n, n), W_fh(n, n), W_ox(n, n), W_oh(n, n),
        W_gx(n, n), W_gh(n, n) {}

  std::size_t cell_size() const { return W_ix.rows; }
};

struct ModelParams {
  Matrix embedding;  // |V| x n, one row per token
  Matrix W0;         // n x d_ctx, projects the context vector into u_0
  LstmParams lstm;
  OutputHead head;

  std::size_t vocab_size() const { return embedding.rows; }
  std::size_t cell_size() const { return lstm.cell_size(); }
  std::size_t ctx_size() const { return W0.cols; }
};

// Gradients are shaped exactly like the parameters.
using ModelGrads = ModelParams;

struct LstmState {
  Vec c;
  Vec h;

  explicit LstmState(std::size_t n = 0) : c(n, 0.0), h(n, 0.0) {}
};

struct TapeRecord {
  int token_in = -1;  // -1 marks the context step
  Vec u, i, f, o, g, c, tanh_c, h;
};

struct Tape {
  Vec ctx;
  std::vector<int> tokens;        // full sequence, BOS ... EOS
  std::vector<TapeRecord> steps;  // one record per consumed input

  // Prediction k (0-based) reads steps[k+1].h and targets tokens[k+1].
  std::size_t n_predictions() const { return steps.empty() ? 0 : steps.size() - 1; }
};

struct ForwardResult {
  std::vector<Vec> logits;  // one logit vector per prediction
  Tape tape;
};

// Model sizing and initialization. Weights are uniform [-0.08, 0.08];
// augmented head blocks are halved to 0.04 so composed weights start at
// single-head scale. Draw order is fixed: embedding, W0, the eight LSTM
// matrices in ix,ih,fx,fh,ox,oh,gx,gh order, then the head blocks.
struct ModelDims {
  std::size_t vocab = 0;
  std::size_t cell = 0;
  std::size_t ctx = 0;
};

ModelParams init_model_params(const ModelDims& dims, HeadKind kind, Rng& rng);
ModelGrads zero_grads(const ModelParams& params);

// Flat views over every parameter tensor, in the fixed order above. Grads use
// the same order, so optimizer state lines up.
std::vector<std::span<double>> tensor_views(ModelParams& p);
std::vector<std::span<const double>> tensor_views(const ModelParams& p);
std::size_t total_param_count(const ModelParams& p);

// One LSTM step.
std::pair<LstmState, TapeRecord> lstm_step(const LstmParams& params, const Vec& u,
                                           const LstmState& prev);

// Runs the trunk over ctx + tokens and caches activations. tokens must be
// BOS-initial and EOS-final with no interior reserved markers.
Tape trunk_forward(const ModelParams& params, const Vec& ctx,
                   const std::vector<int>& tokens);

// Trunk forward plus per-prediction logits from the active head (composed
// weights for augmented heads).
ForwardResult forward(const ModelParams& params, const Vec& ctx,
                      const std::vector<int>& tokens,
                      DomainTag tag = DomainTag::Target);

// BPTT through the trunk given dL/dh for each step record (index-aligned with
// tape.steps; entry 0 is the context step and is normally zero). Accumulates
// into `acc`, head untouched.
void trunk_backward(const ModelParams& params, const Tape& tape,
                    const std::vector<Vec>& dh_steps, ModelGrads& acc);

// Full backward from per-prediction logit gradients. Head gradients follow
// the eval-time weights: Single/Dual route to the active matrix; Augmented
// routes the same gradient to theta_g and theta_tag (the exact-sum objective).
// Accumulates into acc.
void backward(const ModelParams& params, const Tape& tape,
              const std::vector<Vec>& dlogits, DomainTag tag, ModelGrads& acc);

struct SeqLossResult {
  double loss = 0.0;          // summed over prediction steps
  std::size_t n_pred = 0;     // number of predicted tokens (incl. EOS)
  double bound_gap_sum = 0.0; // bound - exact, summed; 0 for exact objectives
};

// Exact cross entropy of the sequence under the eval-time weights for `tag`,
// with gradients accumulated into acc. For augmented heads this is the
// exact-sum objective (theta_g and theta_tag receive identical gradients).
SeqLossResult sequence_ce_backward(const ModelParams& params, const Tape& tape,
                                   DomainTag tag, ModelGrads& acc);

// The convexity upper bound summed over the sequence; augmented heads only.
// Source batches touch theta_g/theta_s, target batches theta_g/theta_t.
SeqLossResult sequence_bound_backward(const ModelParams& params, const Tape& tape,
                                      DomainTag tag, ModelGrads& acc);

// Forward-only exact NLL of the sequence (composed weights for augmented
// heads); used for dev evaluation and scoring.
double sequence_nll(const ModelParams& params, const Vec& ctx,
                    const std::vector<int>& tokens, DomainTag tag);

}  // namespace adacap

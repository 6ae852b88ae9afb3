#pragma once

#include <variant>

#include "adacap/math_core.hpp"

namespace adacap {

enum class DomainTag { Source, Target };

inline const char* domain_name(DomainTag t) {
  return t == DomainTag::Source ? "source" : "target";
}

// ---------------------------------------------------------------------------
// Output-layer designs. All matrices are |V| x n. The variant is fixed for a
// model's lifetime.
//   Single    — one softmax matrix W, shared across domains.
//   Dual      — separate W_s / W_t, trunk shared.
//   Augmented — decomposition w_s = theta_g + theta_s, w_t = theta_g + theta_t;
//               training optimizes the convexity upper bound, evaluation uses
//               the composed weights.
// ---------------------------------------------------------------------------
struct SingleHead {
  Matrix W;
};
struct DualHead {
  Matrix W_s;
  Matrix W_t;
};
struct AugmentedHead {
  Matrix theta_g;
  Matrix theta_s;
  Matrix theta_t;
};

enum class HeadKind { Single, Dual, Augmented };

struct OutputHead {
  std::variant<SingleHead, DualHead, AugmentedHead> v;

  HeadKind kind() const { return static_cast<HeadKind>(v.index()); }
  std::size_t vocab_size() const;
  std::size_t hidden_size() const;

  SingleHead& single() { return std::get<SingleHead>(v); }
  const SingleHead& single() const { return std::get<SingleHead>(v); }
  DualHead& dual() { return std::get<DualHead>(v); }
  const DualHead& dual() const { return std::get<DualHead>(v); }
  AugmentedHead& augmented() { return std::get<AugmentedHead>(v); }
  const AugmentedHead& augmented() const { return std::get<AugmentedHead>(v); }
};

enum class HeadMode { Train, Eval };

// ---------------------------------------------------------------------------
// Losses. All gradients are analytic and validated by grad_check.
// ---------------------------------------------------------------------------

struct CeResult {
  double loss = 0.0;
  Matrix dW;  // |V| x n
  Vec dh;     // n
};

// Cross entropy of a single softmax output:
//   loss = -(W h)_y + lse(W h),  dlogits = softmax(W h) - onehot(y).
CeResult ce_loss(const Matrix& W, const Vec& h, int y);

struct AugmentedResult {
  double loss = 0.0;
  Matrix dtheta_g;
  Matrix dtheta_d;
  Vec dh;
};

// The upper bound on ce_loss(theta_g + theta_d, h, y):
//   -theta_{g,y}^T h + 1/2 lse(2 theta_g h) - theta_{d,y}^T h + 1/2 lse(2 theta_d h)
// The 1/2 lse(2 theta) form is kept literal rather than simplified.
AugmentedResult augmented_loss(const Matrix& theta_g, const Matrix& theta_d,
                               const Vec& h, int y);

// augmented_loss minus the exact composed cross entropy; >= 0 up to rounding,
// and 0 when theta_g == theta_d.
double bound_gap(const Matrix& theta_g, const Matrix& theta_d, const Vec& h, int y);

// Exact cross entropy of the composed weights theta_g + theta_d, with the
// gradient mirrored onto both blocks (dtheta_g == dtheta_d bitwise). Training
// this objective keeps equal initializations equal forever, which is what
// makes the general block redundant without the bound.
AugmentedResult exact_sum_loss(const Matrix& theta_g, const Matrix& theta_d,
                               const Vec& h, int y);

// w_s = theta_g + theta_s, w_t = theta_g + theta_t.
struct ComposedWeights {
  Matrix w_s;
  Matrix w_t;
};
ComposedWeights compose_weights(const OutputHead& head);

// Logits served by a head. Augmented heads only serve composed eval logits;
// requesting Train mode on them is an error ("use augmented_loss").
Vec head_logits(const OutputHead& head, DomainTag tag, const Vec& h,
                HeadMode mode = HeadMode::Eval);

// The matrix a head would use for domain `tag` at evaluation time (composed
// for Augmented). Handy when a whole corpus is scored with one tag.
Matrix eval_weights(const OutputHead& head, DomainTag tag);

}  // namespace adacap

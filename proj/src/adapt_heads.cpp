#include "adacap/adapt_heads.hpp"

#include <cmath>
#include <stdexcept>

namespace adacap {

std::size_t OutputHead::vocab_size() const {
  switch (kind()) {
    case HeadKind::Single:
      return single().W.rows;
    case HeadKind::Dual:
      return dual().W_s.rows;
    case HeadKind::Augmented:
      return augmented().theta_g.rows;
  }
  return 0;
}

std::size_t OutputHead::hidden_size() const {
  switch (kind()) {
    case HeadKind::Single:
      return single().W.cols;
    case HeadKind::Dual:
      return dual().W_s.cols;
    case HeadKind::Augmented:
      return augmented().theta_g.cols;
  }
  return 0;
}

CeResult ce_loss(const Matrix& W, const Vec& h, int y) {
  if (h.size() != W.cols) throw std::invalid_argument("ce_loss: h dimension mismatch");
  if (y < 0 || static_cast<std::size_t>(y) >= W.rows)
    throw std::invalid_argument("ce_loss: label out of range");

  const Vec logits = matvec(W, h);
  const double lse = log_sum_exp(logits);

  CeResult r;
  r.loss = -logits[static_cast<std::size_t>(y)] + lse;

  // dlogits = softmax(logits) - onehot(y)
  Vec dlogits(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    dlogits[i] = std::exp(logits[i] - lse);
  dlogits[static_cast<std::size_t>(y)] -= 1.0;

  r.dW = Matrix(W.rows, W.cols);
  add_outer(r.dW, dlogits, h);
  r.dh = matvec_t(W, dlogits);
  return r;
}

// One -theta_{d,y}^T h + 1/2 lse(2 theta_d h) term of the bound.
// Accumulates dtheta and dh; returns the term's value.
static double bound_term(const Matrix& theta, const Vec& h, int y, Matrix& dtheta,
                         Vec& dh) {
  Vec z = matvec(theta, h);
  const double ty_h = z[static_cast<std::size_t>(y)];
  for (double& x : z) x *= 2.0;  // 2 theta h
  const double lse2 = log_sum_exp(z);

  // d/dtheta of 1/2 lse(2 theta h) is softmax(2 theta h)_i * h per row;
  // the linear term contributes -h to row y.
  Vec p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(z[i] - lse2);
  Vec dlin = p;
  dlin[static_cast<std::size_t>(y)] -= 1.0;
  add_outer(dtheta, dlin, h);
  axpy(dh, matvec_t(theta, dlin), 1.0);

  return -ty_h + 0.5 * lse2;
}

AugmentedResult augmented_loss(const Matrix& theta_g, const Matrix& theta_d,
                               const Vec& h, int y) {
  if (!theta_g.same_shape(theta_d))
    throw std::invalid_argument("augmented_loss: theta shapes differ");
  if (h.size() != theta_g.cols)
    throw std::invalid_argument("augmented_loss: h dimension mismatch");
  if (y < 0 || static_cast<std::size_t>(y) >= theta_g.rows)
    throw std::invalid_argument("augmented_loss: label out of range");

  AugmentedResult r;
  r.dtheta_g = Matrix(theta_g.rows, theta_g.cols);
  r.dtheta_d = Matrix(theta_d.rows, theta_d.cols);
  r.dh.assign(h.size(), 0.0);
  r.loss = bound_term(theta_g, h, y, r.dtheta_g, r.dh) +
           bound_term(theta_d, h, y, r.dtheta_d, r.dh);
  return r;
}

double bound_gap(const Matrix& theta_g, const Matrix& theta_d, const Vec& h, int y) {
  Matrix sum(theta_g.rows, theta_g.cols);
  for (std::size_t i = 0; i < sum.data.size(); ++i)
    sum.data[i] = theta_g.data[i] + theta_d.data[i];
  const double bound = augmented_loss(theta_g, theta_d, h, y).loss;
  const double exact = ce_loss(sum, h, y).loss;
  return bound - exact;
}

AugmentedResult exact_sum_loss(const Matrix& theta_g, const Matrix& theta_d,
                               const Vec& h, int y) {
  if (!theta_g.same_shape(theta_d))
    throw std::invalid_argument("exact_sum_loss: theta shapes differ");
  Matrix sum(theta_g.rows, theta_g.cols);
  for (std::size_t i = 0; i < sum.data.size(); ++i)
    sum.data[i] = theta_g.data[i] + theta_d.data[i];
  CeResult ce = ce_loss(sum, h, y);

  AugmentedResult r;
  r.loss = ce.loss;
  r.dtheta_g = ce.dW;
  r.dtheta_d = ce.dW;  // identical by construction
  r.dh = std::move(ce.dh);
  return r;
}

ComposedWeights compose_weights(const OutputHead& head) {
  if (head.kind() != HeadKind::Augmented)
    throw std::invalid_argument("compose_weights: head is not augmented");
  const AugmentedHead& a = head.augmented();
  ComposedWeights out;
  out.w_s = Matrix(a.theta_g.rows, a.theta_g.cols);
  out.w_t = Matrix(a.theta_g.rows, a.theta_g.cols);
  for (std::size_t i = 0; i < a.theta_g.data.size(); ++i) {
    out.w_s.data[i] = a.theta_g.data[i] + a.theta_s.data[i];
    out.w_t.data[i] = a.theta_g.data[i] + a.theta_t.data[i];
  }
  return out;
}

Vec head_logits(const OutputHead& head, DomainTag tag, const Vec& h, HeadMode mode) {
  switch (head.kind()) {
    case HeadKind::Single:
      return matvec(head.single().W, h);
    case HeadKind::Dual:
      return matvec(tag == DomainTag::Source ? head.dual().W_s : head.dual().W_t, h);
    case HeadKind::Augmented: {
      if (mode == HeadMode::Train)
        throw std::invalid_argument("use augmented_loss");
      const AugmentedHead& a = head.augmented();
      const Matrix& tg = a.theta_g;
      const Matrix& td = tag == DomainTag::Source ? a.theta_s : a.theta_t;
      if (h.size() != tg.cols)
        throw std::invalid_argument("head_logits: h dimension mismatch");
      // Compose per entry so the result is bitwise the same as a matvec on
      // the precomposed w = theta_g + theta_d.
      Vec out(tg.rows, 0.0);
      for (std::size_t i = 0; i < tg.rows; ++i) {
        const double* rg = tg.row(i);
        const double* rd = td.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < tg.cols; ++j) acc += (rg[j] + rd[j]) * h[j];
        out[i] = acc;
      }
      return out;
    }
  }
  throw std::logic_error("head_logits: bad variant");
}

Matrix eval_weights(const OutputHead& head, DomainTag tag) {
  switch (head.kind()) {
    case HeadKind::Single:
      return head.single().W;
    case HeadKind::Dual:
      return tag == DomainTag::Source ? head.dual().W_s : head.dual().W_t;
    case HeadKind::Augmented: {
      const AugmentedHead& a = head.augmented();
      const Matrix& td = tag == DomainTag::Source ? a.theta_s : a.theta_t;
      Matrix w(a.theta_g.rows, a.theta_g.cols);
      for (std::size_t i = 0; i < w.data.size(); ++i)
        w.data[i] = a.theta_g.data[i] + td.data[i];
      return w;
    }
  }
  throw std::logic_error("eval_weights: bad variant");
}

}  // namespace adacap

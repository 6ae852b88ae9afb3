#include "adacap/seq_model.hpp"

#include <cmath>
#include <stdexcept>

namespace adacap {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_tokens(const std::vector<int>& tokens, std::size_t vocab) {
  if (tokens.size() < 2)
    throw std::invalid_argument("sequence must be at least [BOS, EOS]");
  if (tokens.front() != kBosId)
    throw std::invalid_argument("sequence must start with BOS");
  if (tokens.back() != kEosId)
    throw std::invalid_argument("sequence must end with EOS");
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const int t = tokens[k];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw std::invalid_argument("token id out of range");
    if (k > 0 && k + 1 < tokens.size() && (t == kBosId || t == kEosId))
      throw std::invalid_argument("BOS/EOS only allowed at the sequence ends");
  }
}

Matrix init_matrix(std::size_t r, std::size_t c, double scale, Rng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

ModelParams init_model_params(const ModelDims& dims, HeadKind kind, Rng& rng) {
  if (dims.vocab == 0 || dims.cell == 0 || dims.ctx == 0)
    throw std::invalid_argument("init_model_params: zero dimension");
  const double s = 0.08;
  ModelParams p;
  p.embedding = init_matrix(dims.vocab, dims.cell, s, rng);
  p.W0 = init_matrix(dims.cell, dims.ctx, s, rng);
  p.lstm = LstmParams(dims.cell);
  for (Matrix* m : {&p.lstm.W_ix, &p.lstm.W_ih, &p.lstm.W_fx, &p.lstm.W_fh,
                    &p.lstm.W_ox, &p.lstm.W_oh, &p.lstm.W_gx, &p.lstm.W_gh})
    *m = init_matrix(dims.cell, dims.cell, s, rng);

  switch (kind) {
    case HeadKind::Single:
      p.head.v = SingleHead{init_matrix(dims.vocab, dims.cell, s, rng)};
      break;
    case HeadKind::Dual:
      p.head.v = DualHead{init_matrix(dims.vocab, dims.cell, s, rng),
                          init_matrix(dims.vocab, dims.cell, s, rng)};
      break;
    case HeadKind::Augmented:
      // Halved scale so composed theta_g + theta_d starts at single-head scale.
      p.head.v = AugmentedHead{init_matrix(dims.vocab, dims.cell, s / 2, rng),
                               init_matrix(dims.vocab, dims.cell, s / 2, rng),
                               init_matrix(dims.vocab, dims.cell, s / 2, rng)};
      break;
  }
  return p;
}

ModelGrads zero_grads(const ModelParams& params) {
  ModelGrads g;
  g.embedding = Matrix(params.embedding.rows, params.embedding.cols);
  g.W0 = Matrix(params.W0.rows, params.W0.cols);
  g.lstm = LstmParams(params.cell_size());
  switch (params.head.kind()) {
    case HeadKind::Single:
      g.head.v = SingleHead{Matrix(params.vocab_size(), params.cell_size())};
      break;
    case HeadKind::Dual:
      g.head.v = DualHead{Matrix(params.vocab_size(), params.cell_size()),
                          Matrix(params.vocab_size(), params.cell_size())};
      break;
    case HeadKind::Augmented:
      g.head.v = AugmentedHead{Matrix(params.vocab_size(), params.cell_size()),
                               Matrix(params.vocab_size(), params.cell_size()),
                               Matrix(params.vocab_size(), params.cell_size())};
      break;
  }
  return g;
}

std::vector<std::span<double>> tensor_views(ModelParams& p) {
  std::vector<std::span<double>> out;
  auto push = [&out](Matrix& m) { out.emplace_back(m.data); };
  push(p.embedding);
  push(p.W0);
  push(p.lstm.W_ix);
  push(p.lstm.W_ih);
  push(p.lstm.W_fx);
  push(p.lstm.W_fh);
  push(p.lstm.W_ox);
  push(p.lstm.W_oh);
  push(p.lstm.W_gx);
  push(p.lstm.W_gh);
  switch (p.head.kind()) {
    case HeadKind::Single:
      push(p.head.single().W);
      break;
    case HeadKind::Dual:
      push(p.head.dual().W_s);
      push(p.head.dual().W_t);
      break;
    case HeadKind::Augmented:
      push(p.head.augmented().theta_g);
      push(p.head.augmented().theta_s);
      push(p.head.augmented().theta_t);
      break;
  }
  return out;
}

std::vector<std::span<const double>> tensor_views(const ModelParams& p) {
  auto views = tensor_views(const_cast<ModelParams&>(p));
  std::vector<std::span<const double>> out;
  out.reserve(views.size());
  for (auto& v : views) out.emplace_back(v);
  return out;
}

std::size_t total_param_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& v : tensor_views(p)) n += v.size();
  return n;
}

std::pair<LstmState, TapeRecord> lstm_step(const LstmParams& params, const Vec& u,
                                           const LstmState& prev) {
  const std::size_t n = params.cell_size();
  if (u.size() != n || prev.c.size() != n || prev.h.size() != n)
    throw std::invalid_argument("lstm_step: dimension mismatch");

  TapeRecord rec;
  rec.u = u;
  Vec ai = matvec(params.W_ix, u);
  axpy(ai, matvec(params.W_ih, prev.h), 1.0);
  Vec af = matvec(params.W_fx, u);
  axpy(af, matvec(params.W_fh, prev.h), 1.0);
  Vec ao = matvec(params.W_ox, u);
  axpy(ao, matvec(params.W_oh, prev.h), 1.0);
  Vec ag = matvec(params.W_gx, u);
  axpy(ag, matvec(params.W_gh, prev.h), 1.0);

  rec.i.resize(n);
  rec.f.resize(n);
  rec.o.resize(n);
  rec.g.resize(n);
  rec.c.resize(n);
  rec.tanh_c.resize(n);
  rec.h.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    rec.i[j] = sigmoid(ai[j]);
    rec.f[j] = sigmoid(af[j]);
    rec.o[j] = sigmoid(ao[j]);
    rec.g[j] = std::tanh(ag[j]);
    rec.c[j] = rec.f[j] * prev.c[j] + rec.i[j] * rec.g[j];
    rec.tanh_c[j] = std::tanh(rec.c[j]);
    rec.h[j] = rec.o[j] * rec.tanh_c[j];
  }

  LstmState next(n);
  next.c = rec.c;
  next.h = rec.h;
  return {next, rec};
}

Tape trunk_forward(const ModelParams& params, const Vec& ctx,
                   const std::vector<int>& tokens) {
  check_tokens(tokens, params.vocab_size());
  if (ctx.size() != params.ctx_size())
    throw std::invalid_argument("trunk_forward: ctx dimension mismatch");
  const std::size_t n = params.cell_size();

  Tape tape;
  tape.ctx = ctx;
  tape.tokens = tokens;
  tape.steps.reserve(tokens.size());

  LstmState state(n);
  // Step 0: u_0 = W0 * ctx.
  {
    auto [next, rec] = lstm_step(params.lstm, matvec(params.W0, ctx), state);
    rec.token_in = -1;
    state = std::move(next);
    tape.steps.push_back(std::move(rec));
  }
  // Steps 1..L-1: embedding of the previous token.
  for (std::size_t k = 1; k < tokens.size(); ++k) {
    const int tok = tokens[k - 1];
    Vec u(params.embedding.row(static_cast<std::size_t>(tok)),
          params.embedding.row(static_cast<std::size_t>(tok)) + n);
    auto [next, rec] = lstm_step(params.lstm, u, state);
    rec.token_in = tok;
    state = std::move(next);
    tape.steps.push_back(std::move(rec));
  }
  return tape;
}

ForwardResult forward(const ModelParams& params, const Vec& ctx,
                      const std::vector<int>& tokens, DomainTag tag) {
  ForwardResult out;
  out.tape = trunk_forward(params, ctx, tokens);
  out.logits.reserve(out.tape.n_predictions());
  for (std::size_t k = 1; k < out.tape.steps.size(); ++k)
    out.logits.push_back(head_logits(params.head, tag, out.tape.steps[k].h));
  return out;
}

void trunk_backward(const ModelParams& params, const Tape& tape,
                    const std::vector<Vec>& dh_steps, ModelGrads& acc) {
  const std::size_t n = params.cell_size();
  const std::size_t L = tape.steps.size();
  if (dh_steps.size() != L)
    throw std::invalid_argument("trunk_backward: dh_steps/tape mismatch");
  if (L == 0 || tape.steps[0].u.size() != n)
    throw std::invalid_argument("trunk_backward: tape/params mismatch");

  const Vec zeros(n, 0.0);
  Vec dh_carry(n, 0.0), dc_carry(n, 0.0);
  Vec dh(n), dc(n), di(n), df(n), dout(n), dg(n);
  Vec da_i(n), da_f(n), da_o(n), da_g(n);

  for (std::size_t k = L; k-- > 0;) {
    const TapeRecord& rec = tape.steps[k];
    const Vec& h_prev = k > 0 ? tape.steps[k - 1].h : zeros;
    const Vec& c_prev = k > 0 ? tape.steps[k - 1].c : zeros;

    for (std::size_t j = 0; j < n; ++j) {
      dh[j] = dh_steps[k].empty() ? dh_carry[j] : dh_steps[k][j] + dh_carry[j];
      dout[j] = dh[j] * rec.tanh_c[j];
      dc[j] = dc_carry[j] + dh[j] * rec.o[j] * (1.0 - rec.tanh_c[j] * rec.tanh_c[j]);
      di[j] = dc[j] * rec.g[j];
      df[j] = dc[j] * c_prev[j];
      dg[j] = dc[j] * rec.i[j];
      dc_carry[j] = dc[j] * rec.f[j];
      da_i[j] = di[j] * rec.i[j] * (1.0 - rec.i[j]);
      da_f[j] = df[j] * rec.f[j] * (1.0 - rec.f[j]);
      da_o[j] = dout[j] * rec.o[j] * (1.0 - rec.o[j]);
      da_g[j] = dg[j] * (1.0 - rec.g[j] * rec.g[j]);
    }

    add_outer(acc.lstm.W_ix, da_i, rec.u);
    add_outer(acc.lstm.W_fx, da_f, rec.u);
    add_outer(acc.lstm.W_ox, da_o, rec.u);
    add_outer(acc.lstm.W_gx, da_g, rec.u);
    if (k > 0) {
      add_outer(acc.lstm.W_ih, da_i, h_prev);
      add_outer(acc.lstm.W_fh, da_f, h_prev);
      add_outer(acc.lstm.W_oh, da_o, h_prev);
      add_outer(acc.lstm.W_gh, da_g, h_prev);
    }

    Vec du = matvec_t(params.lstm.W_ix, da_i);
    axpy(du, matvec_t(params.lstm.W_fx, da_f), 1.0);
    axpy(du, matvec_t(params.lstm.W_ox, da_o), 1.0);
    axpy(du, matvec_t(params.lstm.W_gx, da_g), 1.0);

    dh_carry = matvec_t(params.lstm.W_ih, da_i);
    axpy(dh_carry, matvec_t(params.lstm.W_fh, da_f), 1.0);
    axpy(dh_carry, matvec_t(params.lstm.W_oh, da_o), 1.0);
    axpy(dh_carry, matvec_t(params.lstm.W_gh, da_g), 1.0);

    if (k == 0) {
      add_outer(acc.W0, du, tape.ctx);
    } else {
      double* erow = acc.embedding.row(static_cast<std::size_t>(rec.token_in));
      for (std::size_t j = 0; j < n; ++j) erow[j] += du[j];
    }
  }
}

namespace {

// Accumulates head gradients and returns dL/dh for one prediction step, given
// dL/dlogits under the eval-time weights.
Vec head_backward_step(const ModelParams& params, DomainTag tag, const Vec& h,
                       const Vec& dlogits, ModelGrads& acc) {
  switch (params.head.kind()) {
    case HeadKind::Single:
      add_outer(acc.head.single().W, dlogits, h);
      return matvec_t(params.head.single().W, dlogits);
    case HeadKind::Dual: {
      Matrix& dW = tag == DomainTag::Source ? acc.head.dual().W_s : acc.head.dual().W_t;
      const Matrix& W =
          tag == DomainTag::Source ? params.head.dual().W_s : params.head.dual().W_t;
      add_outer(dW, dlogits, h);
      return matvec_t(W, dlogits);
    }
    case HeadKind::Augmented: {
      // Composed logits are linear in both blocks, so each receives the same
      // rank-one update.
      AugmentedHead& ga = acc.head.augmented();
      const AugmentedHead& pa = params.head.augmented();
      Matrix& dtag = tag == DomainTag::Source ? ga.theta_s : ga.theta_t;
      const Matrix& ptag = tag == DomainTag::Source ? pa.theta_s : pa.theta_t;
      add_outer(ga.theta_g, dlogits, h);
      add_outer(dtag, dlogits, h);
      Vec dh(h.size(), 0.0);
      for (std::size_t i = 0; i < pa.theta_g.rows; ++i) {
        const double dl = dlogits[i];
        if (dl == 0.0) continue;
        const double* rg = pa.theta_g.row(i);
        const double* rd = ptag.row(i);
        for (std::size_t j = 0; j < dh.size(); ++j) dh[j] += dl * (rg[j] + rd[j]);
      }
      return dh;
    }
  }
  throw std::logic_error("head_backward_step: bad variant");
}

}  // namespace

void backward(const ModelParams& params, const Tape& tape,
              const std::vector<Vec>& dlogits, DomainTag tag, ModelGrads& acc) {
  const std::size_t L = tape.steps.size();
  if (dlogits.size() != tape.n_predictions())
    throw std::invalid_argument("backward: dlogits/tape mismatch");
  std::vector<Vec> dh_steps(L);
  for (std::size_t k = 1; k < L; ++k) {
    if (dlogits[k - 1].size() != params.vocab_size())
      throw std::invalid_argument("backward: dlogits dimension mismatch");
    dh_steps[k] = head_backward_step(params, tag, tape.steps[k].h, dlogits[k - 1], acc);
  }
  trunk_backward(params, tape, dh_steps, acc);
}

SeqLossResult sequence_ce_backward(const ModelParams& params, const Tape& tape,
                                   DomainTag tag, ModelGrads& acc) {
  const std::size_t L = tape.steps.size();
  SeqLossResult res;
  res.n_pred = tape.n_predictions();

  const Matrix W = eval_weights(params.head, tag);
  std::vector<Vec> dh_steps(L);
  for (std::size_t k = 1; k < L; ++k) {
    const Vec& h = tape.steps[k].h;
    const int y = tape.tokens[k];
    Vec logits = matvec(W, h);
    const double lse = log_sum_exp(logits);
    res.loss += lse - logits[static_cast<std::size_t>(y)];

    Vec dlogits(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
      dlogits[i] = std::exp(logits[i] - lse);
    dlogits[static_cast<std::size_t>(y)] -= 1.0;
    dh_steps[k] = head_backward_step(params, tag, h, dlogits, acc);
  }
  trunk_backward(params, tape, dh_steps, acc);
  return res;
}

SeqLossResult sequence_bound_backward(const ModelParams& params, const Tape& tape,
                                      DomainTag tag, ModelGrads& acc) {
  if (params.head.kind() != HeadKind::Augmented)
    throw std::invalid_argument("sequence_bound_backward: head is not augmented");
  const AugmentedHead& pa = params.head.augmented();
  AugmentedHead& ga = acc.head.augmented();
  const Matrix& theta_d = tag == DomainTag::Source ? pa.theta_s : pa.theta_t;
  Matrix& dtheta_d = tag == DomainTag::Source ? ga.theta_s : ga.theta_t;

  const std::size_t L = tape.steps.size();
  const std::size_t V = params.vocab_size();
  SeqLossResult res;
  res.n_pred = tape.n_predictions();

  std::vector<Vec> dh_steps(L);
  Vec z2(V);
  for (std::size_t k = 1; k < L; ++k) {
    const Vec& h = tape.steps[k].h;
    const std::size_t y = static_cast<std::size_t>(tape.tokens[k]);

    Vec zg = matvec(pa.theta_g, h);
    Vec zd = matvec(theta_d, h);

    for (std::size_t i = 0; i < V; ++i) z2[i] = 2.0 * zg[i];
    const double lse_g = log_sum_exp(z2);
    Vec dlin_g(V);
    for (std::size_t i = 0; i < V; ++i) dlin_g[i] = std::exp(z2[i] - lse_g);
    dlin_g[y] -= 1.0;

    for (std::size_t i = 0; i < V; ++i) z2[i] = 2.0 * zd[i];
    const double lse_d = log_sum_exp(z2);
    Vec dlin_d(V);
    for (std::size_t i = 0; i < V; ++i) dlin_d[i] = std::exp(z2[i] - lse_d);
    dlin_d[y] -= 1.0;

    const double bound = -zg[y] + 0.5 * lse_g - zd[y] + 0.5 * lse_d;
    res.loss += bound;

    // Monitoring only: exact composed CE from the same logit pieces.
    for (std::size_t i = 0; i < V; ++i) z2[i] = zg[i] + zd[i];
    res.bound_gap_sum += bound - (log_sum_exp(z2) - z2[y]);

    add_outer(ga.theta_g, dlin_g, h);
    add_outer(dtheta_d, dlin_d, h);
    Vec dh = matvec_t(pa.theta_g, dlin_g);
    axpy(dh, matvec_t(theta_d, dlin_d), 1.0);
    dh_steps[k] = std::move(dh);
  }
  trunk_backward(params, tape, dh_steps, acc);
  return res;
}

double sequence_nll(const ModelParams& params, const Vec& ctx,
                    const std::vector<int>& tokens, DomainTag tag) {
  const Tape tape = trunk_forward(params, ctx, tokens);
  const Matrix W = eval_weights(params.head, tag);
  double nll = 0.0;
  for (std::size_t k = 1; k < tape.steps.size(); ++k) {
    Vec logits = matvec(W, tape.steps[k].h);
    nll += log_sum_exp(logits) - logits[static_cast<std::size_t>(tape.tokens[k])];
  }
  return nll;
}

}  // namespace adacap

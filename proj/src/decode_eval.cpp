#include "adacap/decode_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <thread>

#include "adacap/tokens.hpp"

namespace adacap {

// ---------------------------------------------------------------------------
// Beam search
// ---------------------------------------------------------------------------

namespace {

Vec embedding_row(const ModelParams& params, int token) {
  const double* row = params.embedding.row(static_cast<std::size_t>(token));
  return Vec(row, row + params.embedding.cols);
}

// Trunk state after the context step and the BOS step.
LstmState start_state(const ModelParams& params, const Vec& ctx) {
  if (ctx.size() != params.ctx_size())
    throw std::invalid_argument("context dimension mismatch");
  LstmState state(params.cell_size());
  state = lstm_step(params.lstm, matvec(params.W0, ctx), state).first;
  return lstm_step(params.lstm, embedding_row(params, kBosId), state).first;
}

bool lex_less(const std::vector<int>& a, int a_tail, const std::vector<int>& b,
              int b_tail) {
  // Compares a + [a_tail] with b + [b_tail] lexicographically.
  const std::size_t na = a.size() + 1, nb = b.size() + 1;
  for (std::size_t i = 0; i < std::min(na, nb); ++i) {
    const int xa = i < a.size() ? a[i] : a_tail;
    const int xb = i < b.size() ? b[i] : b_tail;
    if (xa != xb) return xa < xb;
  }
  return na < nb;
}

struct Candidate {
  const Hypothesis* parent = nullptr;
  int token = -1;
  double logp = 0.0;
};

bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.logp != b.logp) return a.logp > b.logp;
  return lex_less(a.parent->tokens, a.token, b.parent->tokens, b.token);
}

}  // namespace

DecodeResult beam_search(const ModelParams& params, const Vec& ctx,
                         std::size_t width, std::size_t max_len, DomainTag tag) {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  const Matrix W = eval_weights(params.head, tag);
  const auto vocab = static_cast<int>(params.vocab_size());

  Beam beam;
  beam.width = width;
  beam.hyps.push_back(Hypothesis{{}, 0.0, start_state(params, ctx)});

  DecodeResult best;
  bool have_best = false;

  for (std::size_t step = 0; step < max_len && !beam.hyps.empty(); ++step) {
    std::vector<Candidate> cands;
    cands.reserve(beam.hyps.size() * static_cast<std::size_t>(vocab));
    for (const Hypothesis& hyp : beam.hyps) {
      Vec logits = matvec(W, hyp.state.h);
      const double lse = log_sum_exp(logits);
      for (int tok = 0; tok < vocab; ++tok) {
        if (tok == kPadId || tok == kBosId) continue;
        cands.push_back({&hyp, tok, hyp.logp + (logits[static_cast<std::size_t>(tok)] - lse)});
      }
    }
    std::sort(cands.begin(), cands.end(), candidate_before);

    std::vector<Hypothesis> next;
    next.reserve(width);
    for (const Candidate& cand : cands) {
      if (cand.token == kEosId) {
        const bool better =
            !have_best || cand.logp > best.logp ||
            (cand.logp == best.logp && lex_less(cand.parent->tokens, kEosId,
                                                best.tokens, kEosId));
        if (better) {
          best.tokens = cand.parent->tokens;
          best.logp = cand.logp;
          best.completed = true;
          have_best = true;
        }
        continue;
      }
      if (next.size() == width) continue;
      Hypothesis h;
      h.tokens = cand.parent->tokens;
      h.tokens.push_back(cand.token);
      h.logp = cand.logp;
      h.state = lstm_step(params.lstm,
                          embedding_row(params, cand.token), cand.parent->state)
                    .first;
      next.push_back(std::move(h));
    }
    beam.hyps = std::move(next);
  }

  if (have_best) return best;
  if (beam.hyps.empty()) throw std::logic_error("beam emptied without a completion");
  DecodeResult fallback;
  fallback.tokens = beam.hyps.front().tokens;
  fallback.logp = beam.hyps.front().logp;
  fallback.completed = false;
  return fallback;
}

double score_sentence(const ModelParams& params, const Vec& ctx,
                      const std::vector<int>& tokens, DomainTag tag) {
  return -sequence_nll(params, ctx, tokens, tag);
}

std::size_t select_answer(const ModelParams& params, const Vec& ctx,
                          const std::vector<std::vector<int>>& choices,
                          DomainTag tag) {
  if (choices.size() < 2) throw std::invalid_argument("need at least two choices");
  std::size_t best = 0;
  double best_score = score_sentence(params, ctx, choices[0], tag);
  for (std::size_t i = 1; i < choices.size(); ++i) {
    const double score = score_sentence(params, ctx, choices[i], tag);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

namespace {

using NgramCounts = std::map<std::vector<int>, std::size_t>;

NgramCounts count_ngrams(const std::vector<int>& tokens, std::size_t k) {
  NgramCounts counts;
  if (tokens.size() < k) return counts;
  for (std::size_t i = 0; i + k <= tokens.size(); ++i)
    ++counts[std::vector<int>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                              tokens.begin() + static_cast<std::ptrdiff_t>(i + k))];
  return counts;
}

}  // namespace

BleuScores corpus_bleu(const std::vector<std::vector<int>>& candidates,
                       const std::vector<std::vector<std::vector<int>>>& references,
                       int max_n) {
  if (candidates.empty()) throw std::invalid_argument("empty corpus");
  if (candidates.size() != references.size())
    throw std::invalid_argument("candidate/reference count mismatch");
  if (max_n < 1 || max_n > 4) throw std::invalid_argument("max_n must be in 1..4");

  const auto kmax = static_cast<std::size_t>(max_n);
  std::vector<std::size_t> clipped(kmax, 0), total(kmax, 0);
  std::size_t cand_len = 0, ref_len = 0;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty())
      throw std::invalid_argument("every candidate needs at least one reference");
    cand_len += cand.size();

    // Closest reference length; ties toward the shorter reference.
    std::size_t best_ref = refs[0].size();
    for (const auto& ref : refs) {
      const auto diff = [&](std::size_t r) {
        return r > cand.size() ? r - cand.size() : cand.size() - r;
      };
      if (diff(ref.size()) < diff(best_ref) ||
          (diff(ref.size()) == diff(best_ref) && ref.size() < best_ref))
        best_ref = ref.size();
    }
    ref_len += best_ref;

    for (std::size_t k = 1; k <= kmax; ++k) {
      const NgramCounts cand_counts = count_ngrams(cand, k);
      if (cand_counts.empty()) continue;
      NgramCounts ref_max;
      for (const auto& ref : refs)
        for (const auto& [gram, count] : count_ngrams(ref, k)) {
          auto& slot = ref_max[gram];
          slot = std::max(slot, count);
        }
      for (const auto& [gram, count] : cand_counts) {
        const auto it = ref_max.find(gram);
        const std::size_t limit = it == ref_max.end() ? 0 : it->second;
        clipped[k - 1] += std::min(count, limit);
        total[k - 1] += count;
      }
    }
  }

  BleuScores out;
  if (cand_len == 0) return out;  // brevity penalty drives everything to 0
  const double bp =
      cand_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
  double log_precision_sum = 0.0;
  bool zero = false;
  for (std::size_t k = 1; k <= kmax; ++k) {
    if (clipped[k - 1] == 0 || total[k - 1] == 0) zero = true;
    if (!zero)
      log_precision_sum += std::log(static_cast<double>(clipped[k - 1]) /
                                    static_cast<double>(total[k - 1]));
    out.bleu[k - 1] =
        zero ? 0.0 : bp * std::exp(log_precision_sum / static_cast<double>(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Perplexity and report
// ---------------------------------------------------------------------------

double perplexity(const ModelParams& params, const std::vector<Example>& examples,
                  DomainTag tag) {
  if (examples.empty()) throw std::invalid_argument("empty dataset");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    nll += sequence_nll(params, ex.ctx, ex.tokens, tag);
    tokens += ex.tokens.size() - 1;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

const char* EvalReport::csv_header() {
  return "bleu1,bleu2,bleu3,bleu4,perplexity,sentences,candidate_tokens,"
         "reference_tokens,scored_tokens";
}

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string EvalReport::csv_row() const {
  std::string row = fmt_double(bleu1);
  for (double x : {bleu2, bleu3, bleu4, perplexity}) row += "," + fmt_double(x);
  for (std::size_t n : {sentences, candidate_tokens, reference_tokens, scored_tokens})
    row += "," + std::to_string(n);
  return row;
}

nlohmann::json EvalReport::to_json() const {
  return {{"bleu1", bleu1},
          {"bleu2", bleu2},
          {"bleu3", bleu3},
          {"bleu4", bleu4},
          {"perplexity", perplexity},
          {"sentences", sentences},
          {"candidate_tokens", candidate_tokens},
          {"reference_tokens", reference_tokens},
          {"scored_tokens", scored_tokens}};
}

EvalReport evaluate(const ModelParams& params, const std::vector<Example>& examples,
                    DomainTag tag, std::size_t beam_width, std::size_t max_len,
                    int jobs) {
  if (examples.empty()) throw std::invalid_argument("empty dataset");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");

  std::vector<std::vector<int>> candidates(examples.size());
  auto decode_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      candidates[i] =
          beam_search(params, examples[i].ctx, beam_width, max_len, tag).tokens;
  };
  const auto n_jobs = std::min<std::size_t>(static_cast<std::size_t>(jobs), examples.size());
  if (n_jobs <= 1) {
    decode_range(0, examples.size());
  } else {
    std::vector<std::thread> workers;
    const std::size_t per = (examples.size() + n_jobs - 1) / n_jobs;
    for (std::size_t j = 0; j < n_jobs; ++j) {
      const std::size_t begin = j * per;
      const std::size_t end = std::min(examples.size(), begin + per);
      if (begin < end) workers.emplace_back(decode_range, begin, end);
    }
    for (auto& w : workers) w.join();
  }

  std::vector<std::vector<std::vector<int>>> references(examples.size());
  EvalReport report;
  report.sentences = examples.size();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& toks = examples[i].tokens;
    references[i].push_back(
        std::vector<int>(toks.begin() + 1, toks.end() - 1));  // strip BOS/EOS
    report.reference_tokens += references[i][0].size();
    report.candidate_tokens += candidates[i].size();
    report.scored_tokens += toks.size() - 1;
  }

  const BleuScores bleu = corpus_bleu(candidates, references, 4);
  report.bleu1 = bleu.bleu[0];
  report.bleu2 = bleu.bleu[1];
  report.bleu3 = bleu.bleu[2];
  report.bleu4 = bleu.bleu[3];
  report.perplexity = perplexity(params, examples, tag);
  return report;
}

}  // namespace adacap

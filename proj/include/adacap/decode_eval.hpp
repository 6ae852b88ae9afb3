#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adacap/data_io.hpp"
#include "adacap/seq_model.hpp"

#include "json.hpp"

namespace adacap {

// ---------------------------------------------------------------------------
// Beam-search decoding. Hypotheses hold generated content tokens only (no
// BOS/EOS); scores are unnormalized cumulative log probabilities, so longer
// hypotheses never outscore their own prefixes. No length normalization.
// ---------------------------------------------------------------------------

struct Hypothesis {
  std::vector<int> tokens;
  double logp = 0.0;
  LstmState state;  // trunk state after BOS and all generated tokens
};

struct Beam {
  std::size_t width = 0;
  std::vector<Hypothesis> hyps;  // sorted by logp descending
};

struct DecodeResult {
  std::vector<int> tokens;  // content tokens; EOS stripped
  double logp = 0.0;        // includes the EOS step when completed
  bool completed = false;   // false = max_len hit with no EOS-terminated hypothesis
};

// Highest-scoring EOS-terminated hypothesis with at most max_len content
// tokens, falling back to the best live hypothesis when none completes.
// PAD and BOS are never proposed as continuations. Ties break toward the
// lexicographically smaller token sequence.
DecodeResult beam_search(const ModelParams& params, const Vec& ctx,
                         std::size_t width, std::size_t max_len,
                         DomainTag tag = DomainTag::Target);

// Sum of per-step log softmax probabilities of a full BOS...EOS sequence;
// always <= 0. Sequences with tokens after EOS are rejected.
double score_sentence(const ModelParams& params, const Vec& ctx,
                      const std::vector<int>& tokens,
                      DomainTag tag = DomainTag::Target);

// Index of the highest-scoring choice (each a full BOS...EOS sequence);
// ties go to the lowest index. Needs at least two choices.
std::size_t select_answer(const ModelParams& params, const Vec& ctx,
                          const std::vector<std::vector<int>>& choices,
                          DomainTag tag = DomainTag::Target);

// ---------------------------------------------------------------------------
// Corpus metrics
// ---------------------------------------------------------------------------

struct BleuScores {
  double bleu[4] = {0.0, 0.0, 0.0, 0.0};  // bleu[k-1] = BLEU-k
};

// Corpus-level BLEU with clipped n-gram counts and brevity penalty, no
// smoothing: any zero precision up to k zeroes BLEU-k. Reference length per
// sentence is the closest to the candidate's (ties toward the shorter).
// Sequences are content tokens only.
BleuScores corpus_bleu(const std::vector<std::vector<int>>& candidates,
                       const std::vector<std::vector<std::vector<int>>>& references,
                       int max_n = 4);

// exp(mean per-token NLL) over all predicted tokens including EOS.
double perplexity(const ModelParams& params, const std::vector<Example>& examples,
                  DomainTag tag = DomainTag::Target);

// ---------------------------------------------------------------------------
// EvalReport: beam-decode a corpus against its own captions as references,
// plus exact perplexity. Serializes to one CSV row or a JSON object.
// ---------------------------------------------------------------------------

struct EvalReport {
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  double perplexity = 0.0;
  std::size_t sentences = 0;
  std::size_t candidate_tokens = 0;  // generated content tokens
  std::size_t reference_tokens = 0;  // reference content tokens
  std::size_t scored_tokens = 0;     // predicted tokens (incl. EOS) behind perplexity

  static const char* csv_header();
  std::string csv_row() const;
  nlohmann::json to_json() const;
};

// jobs > 1 decodes sentences on that many threads; results are reduced in
// index order, so the report is identical for any job count.
EvalReport evaluate(const ModelParams& params, const std::vector<Example>& examples,
                    DomainTag tag, std::size_t beam_width = 5,
                    std::size_t max_len = 30, int jobs = 1);

}  // namespace adacap

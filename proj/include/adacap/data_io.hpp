#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adacap/adapt_heads.hpp"
#include "adacap/math_core.hpp"
#include "adacap/tokens.hpp"

namespace adacap {

// ---------------------------------------------------------------------------
// Vocabulary: id <-> string with the four reserved symbols pinned at the
// front. hash() is FNV-1a over the token strings and is stored in
// checkpoints so a model is never silently decoded with the wrong table.
// ---------------------------------------------------------------------------

class Vocab {
 public:
  static Vocab with_reserved();

  int add(const std::string& token);          // returns existing id if present
  int encode(const std::string& token) const; // kUnkId if absent
  const std::string& decode(int id) const;    // throws on out-of-range id
  bool contains(const std::string& token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

// ---------------------------------------------------------------------------
// Examples and datasets
// ---------------------------------------------------------------------------

struct Example {
  Vec ctx;                  // context vector (stands in for image features)
  std::vector<int> tokens;  // BOS ... EOS
};

struct DomainDataset {
  DomainTag domain = DomainTag::Target;
  std::vector<Example> train, dev, test;
  std::shared_ptr<const Vocab> vocab;
};

// ---------------------------------------------------------------------------
// Synthetic two-domain corpus.
//
// A fixed set of topics owns distributions over a shared vocabulary block
// and over each domain's exclusive block. Both domains draw from the same
// shared-block distributions (this is the transferable structure) but from
// their own exclusive blocks and their own topic priors. Sentences mix two
// topics, with a bigram bias that makes some successor pairs sticky. The
// context vector is a linear projection of the topic mixture plus noise.
// ---------------------------------------------------------------------------

struct SynthSpec {
  int shared_vocab = 60;   // tokens visible to both domains
  int excl_source = 30;    // source-only tokens
  int excl_target = 30;    // target-only tokens
  int topics = 6;
  int d_ctx = 16;
  int len_min = 4;         // content length bounds, excluding BOS/EOS
  int len_max = 10;
  int n_train_source = 5000;
  int n_dev_source = 500;
  int n_test_source = 500;
  int n_train_target = 300;
  int n_dev_target = 200;
  int n_test_target = 500;
  double shared_draw_prob = 0.6;  // chance a token comes from the shared block
  double bigram_bias = 0.35;      // chance the successor table overrides the topic draw
  double ctx_noise = 0.1;
  double topic_sharpen = 3.0;     // higher = peakier token distributions
  bool identical_priors = false;  // give both domains the same topic prior
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  std::shared_ptr<const Vocab> vocab;
  DomainDataset source, target;
};

SynthCorpus synth_generate(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// JSONL persistence. Each split file starts with a header line
//   {"format_version":1,"kind":"adacap.dataset","domain":...,"split":...,"count":N}
// followed by N records {"ctx":[...],"tokens":["<BOS>",...,"<EOS>"]}.
// Tokens are stored as strings; loading encodes through the supplied vocab,
// mapping unknown strings to <UNK>.
// ---------------------------------------------------------------------------

inline constexpr int kDatasetFormatVersion = 1;

std::string split_filename(DomainTag domain, const std::string& split);

void save_split(const std::vector<Example>& examples, const Vocab& vocab,
                DomainTag domain, const std::string& split,
                const std::string& path);
std::vector<Example> load_split(const Vocab& vocab, DomainTag domain,
                                const std::string& split,
                                const std::string& path);

// Writes vocab.txt plus {source,target}_{train,dev,test}.jsonl under dir.
void save_corpus(const SynthCorpus& corpus, const std::string& dir);

// Loads one domain's three splits from dir using the given vocab.
DomainDataset load_domain(const std::string& dir, DomainTag domain,
                          std::shared_ptr<const Vocab> vocab);

// Token frequencies of a split, most frequent first (reserved ids skipped).
std::vector<std::pair<std::string, std::size_t>> top_tokens(
    const std::vector<Example>& examples, const Vocab& vocab, std::size_t k);

}  // namespace adacap

#include "adacap/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace adacap {

namespace {

using nlohmann::json;

std::string line_error(const std::string& path, std::size_t line_no,
                       const std::string& what) {
  return path + " line " + std::to_string(line_no) + ": " + what;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

Vocab Vocab::with_reserved() {
  Vocab v;
  for (const char* tok : {kPadTok, kBosTok, kEosTok, kUnkTok}) v.add(tok);
  return v;
}

int Vocab::add(const std::string& token) {
  if (token.empty()) throw std::invalid_argument("empty token");
  for (unsigned char c : token)
    if (std::isspace(c) || std::iscntrl(c))
      throw std::invalid_argument("token contains whitespace: '" + token + "'");
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::encode(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::decode(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

std::uint64_t Vocab::hash() const {
  // FNV-1a over token bytes with a separator byte per token.
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (const auto& tok : tokens_) {
    for (unsigned char c : tok) mix(c);
    mix(0xFF);
  }
  return h;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# adacap.vocab v1\n";
  for (const auto& tok : vocab.tokens()) out << tok << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "# adacap.vocab v1")
    throw std::runtime_error(path + ": unsupported vocab header");
  Vocab v = Vocab::with_reserved();
  std::size_t line_no = 1;
  std::size_t id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (id < kNumReserved) {
      if (line != v.tokens()[id])
        throw std::runtime_error(line_error(path, line_no,
                                            "reserved token mismatch, expected " +
                                                v.tokens()[id]));
    } else {
      if (static_cast<std::size_t>(v.add(line)) != id)
        throw std::runtime_error(line_error(path, line_no, "duplicate token '" + line + "'"));
    }
    ++id;
  }
  if (id < kNumReserved)
    throw std::runtime_error(path + ": vocab missing reserved tokens");
  return v;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

// Weight table for one topic over one vocabulary block.
using TopicDist = std::vector<double>;

double exp_draw(Rng& rng) { return -std::log(1.0 - rng.next_double()); }

TopicDist sharpened_dist(Rng& rng, std::size_t n, double sharpen) {
  TopicDist w(n);
  double total = 0.0;
  for (auto& x : w) {
    x = std::pow(exp_draw(rng), sharpen);
    total += x;
  }
  if (total <= 0.0) total = 1.0;
  for (auto& x : w) x /= total;
  return w;
}

std::size_t categorical(Rng& rng, const TopicDist& dist) {
  const double u = rng.next_double();
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist[i];
    if (u < acc) return i;
  }
  return dist.size() - 1;  // guard against rounding in the cumulative sum
}

void validate_spec(const SynthSpec& spec) {
  if (spec.shared_vocab < 0 || spec.excl_source < 0 || spec.excl_target < 0)
    throw std::invalid_argument("vocabulary block sizes must be non-negative");
  if (spec.shared_vocab + spec.excl_source == 0)
    throw std::invalid_argument("source domain has empty vocabulary");
  if (spec.shared_vocab + spec.excl_target == 0)
    throw std::invalid_argument("target domain has empty vocabulary");
  if (spec.topics < 1) throw std::invalid_argument("topics must be >= 1");
  if (spec.d_ctx < 1) throw std::invalid_argument("d_ctx must be >= 1");
  if (spec.len_min < 1 || spec.len_max < spec.len_min)
    throw std::invalid_argument("need 1 <= len_min <= len_max");
  for (int n : {spec.n_train_source, spec.n_dev_source, spec.n_test_source,
                spec.n_train_target, spec.n_dev_target, spec.n_test_target})
    if (n < 0) throw std::invalid_argument("split sizes must be non-negative");
  for (double p : {spec.shared_draw_prob, spec.bigram_bias})
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument("probabilities must lie in [0, 1]");
  if (spec.ctx_noise < 0.0) throw std::invalid_argument("ctx_noise must be >= 0");
  if (spec.topic_sharpen <= 0.0)
    throw std::invalid_argument("topic_sharpen must be > 0");
}

struct SynthTables {
  // First id of each block in the vocab; blocks are contiguous.
  int shared_base = kNumReserved;
  int excl_base[2] = {0, 0};  // indexed by DomainTag
  std::vector<TopicDist> shared;         // per topic, over shared block
  std::vector<TopicDist> excl[2];        // per domain, per topic, over excl block
  TopicDist prior[2];                    // per domain, over topics
  Matrix projection;                     // d_ctx x topics
  std::vector<int> succ_shared;          // shared index -> shared index
  std::vector<int> succ_excl[2];         // excl index -> content id (absolute)
};

SynthTables build_tables(const SynthSpec& spec, Vocab& vocab) {
  SynthTables t;
  char name[16];
  for (int i = 0; i < spec.shared_vocab; ++i) {
    std::snprintf(name, sizeof name, "c%03d", i);
    vocab.add(name);
  }
  t.excl_base[0] = static_cast<int>(vocab.size());
  for (int i = 0; i < spec.excl_source; ++i) {
    std::snprintf(name, sizeof name, "s%03d", i);
    vocab.add(name);
  }
  t.excl_base[1] = static_cast<int>(vocab.size());
  for (int i = 0; i < spec.excl_target; ++i) {
    std::snprintf(name, sizeof name, "t%03d", i);
    vocab.add(name);
  }

  Rng rng(mix_seed(spec.seed, 0));
  const auto k = static_cast<std::size_t>(spec.topics);
  t.shared.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    t.shared.push_back(sharpened_dist(rng, static_cast<std::size_t>(spec.shared_vocab),
                                      spec.topic_sharpen));
  const int excl_sizes[2] = {spec.excl_source, spec.excl_target};
  for (int d = 0; d < 2; ++d)
    for (std::size_t i = 0; i < k; ++i)
      t.excl[d].push_back(sharpened_dist(rng, static_cast<std::size_t>(excl_sizes[d]),
                                         spec.topic_sharpen));
  t.prior[0] = sharpened_dist(rng, k, 2.0);
  t.prior[1] = spec.identical_priors ? t.prior[0] : sharpened_dist(rng, k, 2.0);

  t.projection = Matrix(static_cast<std::size_t>(spec.d_ctx), k);
  for (auto& x : t.projection.data) x = rng.uniform(-1.0, 1.0);

  t.succ_shared.resize(static_cast<std::size_t>(spec.shared_vocab));
  for (auto& s : t.succ_shared)
    s = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.shared_vocab)));
  for (int d = 0; d < 2; ++d) {
    const int content = spec.shared_vocab + excl_sizes[d];
    t.succ_excl[d].resize(static_cast<std::size_t>(excl_sizes[d]));
    for (auto& s : t.succ_excl[d]) {
      const int r = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(content)));
      s = r < spec.shared_vocab ? t.shared_base + r : t.excl_base[d] + (r - spec.shared_vocab);
    }
  }
  return t;
}

Example sample_example(const SynthSpec& spec, const SynthTables& t, int d, Rng& rng) {
  const int excl_size = d == 0 ? spec.excl_source : spec.excl_target;
  const std::size_t z1 = categorical(rng, t.prior[d]);
  const std::size_t z2 = categorical(rng, t.prior[d]);
  const int len =
      spec.len_min +
      static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.len_max - spec.len_min + 1)));

  Example ex;
  ex.tokens.reserve(static_cast<std::size_t>(len) + 2);
  ex.tokens.push_back(kBosId);
  int prev = -1;
  for (int pos = 0; pos < len; ++pos) {
    int tok = -1;
    if (prev >= 0 && rng.next_double() < spec.bigram_bias) {
      if (prev >= t.excl_base[d])
        tok = t.succ_excl[d][static_cast<std::size_t>(prev - t.excl_base[d])];
      else
        tok = t.shared_base + t.succ_shared[static_cast<std::size_t>(prev - t.shared_base)];
    } else {
      const std::size_t topic = rng.next_double() < 0.7 ? z1 : z2;
      bool from_shared = spec.shared_vocab > 0;
      if (spec.shared_vocab > 0 && excl_size > 0)
        from_shared = rng.next_double() < spec.shared_draw_prob;
      if (from_shared)
        tok = t.shared_base + static_cast<int>(categorical(rng, t.shared[topic]));
      else
        tok = t.excl_base[d] + static_cast<int>(categorical(rng, t.excl[d][topic]));
    }
    ex.tokens.push_back(tok);
    prev = tok;
  }
  ex.tokens.push_back(kEosId);

  TopicDist pi(t.prior[d].size(), 0.0);
  pi[z1] += 0.7;
  pi[z2] += 0.3;
  ex.ctx.resize(static_cast<std::size_t>(spec.d_ctx));
  for (std::size_t i = 0; i < ex.ctx.size(); ++i) {
    double acc = 0.0;
    const double* row = t.projection.row(i);
    for (std::size_t j = 0; j < pi.size(); ++j) acc += row[j] * pi[j];
    ex.ctx[i] = acc + spec.ctx_noise * rng.uniform(-1.0, 1.0);
  }
  return ex;
}

std::vector<Example> sample_split(const SynthSpec& spec, const SynthTables& t,
                                  int d, int count, std::uint64_t stream) {
  Rng rng(mix_seed(spec.seed, stream));
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample_example(spec, t, d, rng));
  return out;
}

}  // namespace

SynthCorpus synth_generate(const SynthSpec& spec) {
  validate_spec(spec);
  Vocab vocab = Vocab::with_reserved();
  const SynthTables tables = build_tables(spec, vocab);

  SynthCorpus corpus;
  corpus.vocab = std::make_shared<const Vocab>(std::move(vocab));
  corpus.source.domain = DomainTag::Source;
  corpus.target.domain = DomainTag::Target;
  corpus.source.vocab = corpus.vocab;
  corpus.target.vocab = corpus.vocab;

  // Stream ids 10..15 keep every split on its own deterministic RNG stream,
  // so splits are disjoint by construction and count changes in one split
  // never shift another.
  corpus.source.train = sample_split(spec, tables, 0, spec.n_train_source, 10);
  corpus.source.dev = sample_split(spec, tables, 0, spec.n_dev_source, 11);
  corpus.source.test = sample_split(spec, tables, 0, spec.n_test_source, 12);
  corpus.target.train = sample_split(spec, tables, 1, spec.n_train_target, 13);
  corpus.target.dev = sample_split(spec, tables, 1, spec.n_dev_target, 14);
  corpus.target.test = sample_split(spec, tables, 1, spec.n_test_target, 15);
  return corpus;
}

// ---------------------------------------------------------------------------
// JSONL persistence
// ---------------------------------------------------------------------------

std::string split_filename(DomainTag domain, const std::string& split) {
  return std::string(domain_name(domain)) + "_" + split + ".jsonl";
}

void save_split(const std::vector<Example>& examples, const Vocab& vocab,
                DomainTag domain, const std::string& split,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  json header;
  header["format_version"] = kDatasetFormatVersion;
  header["kind"] = "adacap.dataset";
  header["domain"] = domain_name(domain);
  header["split"] = split;
  header["count"] = examples.size();
  out << header.dump() << '\n';
  for (const auto& ex : examples) {
    json rec;
    rec["ctx"] = ex.ctx;
    json toks = json::array();
    for (int id : ex.tokens) toks.push_back(vocab.decode(id));
    rec["tokens"] = std::move(toks);
    out << rec.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Example> load_split(const Vocab& vocab, DomainTag domain,
                                const std::string& split,
                                const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(line_error(path, 1, e.what()));
  }
  if (!header.is_object() || header.value("kind", "") != "adacap.dataset")
    throw std::runtime_error(path + ": not an adacap dataset file");
  if (header.value("format_version", -1) != kDatasetFormatVersion)
    throw std::runtime_error(path + ": unsupported format_version");
  if (header.value("domain", "") != domain_name(domain))
    throw std::runtime_error(path + ": expected domain '" +
                             std::string(domain_name(domain)) + "', found '" +
                             header.value("domain", "") + "'");
  if (header.value("split", "") != split)
    throw std::runtime_error(path + ": expected split '" + split + "', found '" +
                             header.value("split", "") + "'");
  if (!header.contains("count") || !header["count"].is_number_unsigned())
    throw std::runtime_error(path + ": header missing count");
  const auto count = header["count"].get<std::size_t>();

  std::vector<Example> out;
  out.reserve(count);
  std::size_t line_no = 1;
  std::size_t ctx_dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (out.size() == count)
      throw std::runtime_error(line_error(path, line_no, "unexpected extra line"));
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(line_error(path, line_no, e.what()));
    }
    if (!rec.is_object() || !rec.contains("ctx") || !rec.contains("tokens"))
      throw std::runtime_error(line_error(path, line_no, "record needs ctx and tokens"));
    Example ex;
    try {
      ex.ctx = rec["ctx"].get<Vec>();
      for (const auto& tok : rec["tokens"])
        ex.tokens.push_back(vocab.encode(tok.get<std::string>()));
    } catch (const json::exception& e) {
      throw std::runtime_error(line_error(path, line_no, e.what()));
    }
    if (ex.ctx.empty())
      throw std::runtime_error(line_error(path, line_no, "empty context vector"));
    if (ctx_dim == 0)
      ctx_dim = ex.ctx.size();
    else if (ex.ctx.size() != ctx_dim)
      throw std::runtime_error(line_error(path, line_no, "context dimension mismatch"));
    if (ex.tokens.size() < 2 || ex.tokens.front() != kBosId || ex.tokens.back() != kEosId)
      throw std::runtime_error(line_error(
          path, line_no, "sequence must start with <BOS> and end with <EOS>"));
    out.push_back(std::move(ex));
  }
  if (out.size() != count)
    throw std::runtime_error(path + ": expected " + std::to_string(count) +
                             " records, found " + std::to_string(out.size()));
  return out;
}

void save_corpus(const SynthCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_vocab(*corpus.vocab, (fs::path(dir) / "vocab.txt").string());
  const DomainDataset* domains[2] = {&corpus.source, &corpus.target};
  for (const DomainDataset* ds : domains) {
    const std::pair<const char*, const std::vector<Example>*> splits[3] = {
        {"train", &ds->train}, {"dev", &ds->dev}, {"test", &ds->test}};
    for (const auto& [name, examples] : splits) {
      const fs::path path = fs::path(dir) / split_filename(ds->domain, name);
      save_split(*examples, *corpus.vocab, ds->domain, name, path.string());
    }
  }
}

DomainDataset load_domain(const std::string& dir, DomainTag domain,
                          std::shared_ptr<const Vocab> vocab) {
  namespace fs = std::filesystem;
  if (!vocab) throw std::invalid_argument("vocab must not be null");
  DomainDataset ds;
  ds.domain = domain;
  ds.vocab = std::move(vocab);
  ds.train = load_split(*ds.vocab, domain, "train",
                        (fs::path(dir) / split_filename(domain, "train")).string());
  ds.dev = load_split(*ds.vocab, domain, "dev",
                      (fs::path(dir) / split_filename(domain, "dev")).string());
  ds.test = load_split(*ds.vocab, domain, "test",
                       (fs::path(dir) / split_filename(domain, "test")).string());
  return ds;
}

std::vector<std::pair<std::string, std::size_t>> top_tokens(
    const std::vector<Example>& examples, const Vocab& vocab, std::size_t k) {
  std::vector<std::size_t> counts(vocab.size(), 0);
  for (const auto& ex : examples)
    for (int id : ex.tokens)
      if (id >= static_cast<int>(kNumReserved)) ++counts[static_cast<std::size_t>(id)];
  std::vector<std::pair<std::string, std::size_t>> out;
  for (std::size_t id = kNumReserved; id < counts.size(); ++id)
    if (counts[id] > 0) out.emplace_back(vocab.tokens()[id], counts[id]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace adacap

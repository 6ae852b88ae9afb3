#include "adacap/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <sstream>
#include <thread>

namespace adacap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string now_iso8601() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_json_file(const std::string& path, const json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

// Maps exceptions to the documented exit codes.
template <typename F>
int guard(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "error: " << e.what() << " (epoch " << e.epoch << ", batch " << e.batch
        << ")\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

void fail_unknown_keys(const FlatConfig& cfg) {
  const auto leftovers = cfg.untouched_keys();
  if (leftovers.empty()) return;
  std::string msg = cfg.origin() + ": unknown config key(s):";
  for (const auto& k : leftovers) msg += " " + k;
  throw std::invalid_argument(msg);
}

}  // namespace

// ---------------------------------------------------------------------------
// FlatConfig
// ---------------------------------------------------------------------------

FlatConfig FlatConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str(), path);
}

FlatConfig FlatConfig::parse_text(const std::string& text, const std::string& origin) {
  FlatConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + " line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(origin + " line " + std::to_string(line_no) +
                                  ": empty key");
    cfg.values_[key] = value;
  }
  return cfg;
}

void FlatConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool FlatConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string FlatConfig::get_string(const std::string& key,
                                   const std::string& fallback) const {
  touched_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

namespace {

[[noreturn]] void bad_value(const std::string& origin, const std::string& key,
                            const std::string& value, const char* want) {
  throw std::invalid_argument(origin + ": key '" + key + "': expected " + want +
                              ", got '" + value + "'");
}

}  // namespace

int FlatConfig::get_int(const std::string& key, int fallback) const {
  touched_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    bad_value(origin_, key, it->second, "an integer");
  }
}

std::uint64_t FlatConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  touched_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    bad_value(origin_, key, it->second, "an unsigned integer");
  }
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  touched_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    bad_value(origin_, key, it->second, "a number");
  }
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  touched_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  bad_value(origin_, key, it->second, "true|false");
}

std::vector<std::string> FlatConfig::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  touched_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  std::istringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::vector<int> FlatConfig::get_int_list(const std::string& key,
                                          const std::vector<int>& fallback) const {
  const auto strings = get_string_list(key, {});
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (const auto& s : strings) {
    try {
      out.push_back(std::stoi(s));
    } catch (const std::exception&) {
      bad_value(origin_, key, s, "a comma-separated integer list");
    }
  }
  return out;
}

std::vector<std::string> FlatConfig::untouched_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_)
    if (touched_.count(key) == 0) out.push_back(key);
  return out;
}

// ---------------------------------------------------------------------------
// Config conversion
// ---------------------------------------------------------------------------

SynthSpec synth_spec_from_config(const FlatConfig& cfg) {
  SynthSpec spec;
  spec.shared_vocab = cfg.get_int("shared_vocab", spec.shared_vocab);
  spec.excl_source = cfg.get_int("excl_source", spec.excl_source);
  spec.excl_target = cfg.get_int("excl_target", spec.excl_target);
  spec.topics = cfg.get_int("topics", spec.topics);
  spec.d_ctx = cfg.get_int("d_ctx", spec.d_ctx);
  spec.len_min = cfg.get_int("len_min", spec.len_min);
  spec.len_max = cfg.get_int("len_max", spec.len_max);
  spec.n_train_source = cfg.get_int("n_train_source", spec.n_train_source);
  spec.n_dev_source = cfg.get_int("n_dev_source", spec.n_dev_source);
  spec.n_test_source = cfg.get_int("n_test_source", spec.n_test_source);
  spec.n_train_target = cfg.get_int("n_train_target", spec.n_train_target);
  spec.n_dev_target = cfg.get_int("n_dev_target", spec.n_dev_target);
  spec.n_test_target = cfg.get_int("n_test_target", spec.n_test_target);
  spec.shared_draw_prob = cfg.get_double("shared_draw_prob", spec.shared_draw_prob);
  spec.bigram_bias = cfg.get_double("bigram_bias", spec.bigram_bias);
  spec.ctx_noise = cfg.get_double("ctx_noise", spec.ctx_noise);
  spec.topic_sharpen = cfg.get_double("topic_sharpen", spec.topic_sharpen);
  spec.identical_priors = cfg.get_bool("identical_priors", spec.identical_priors);
  spec.seed = cfg.get_u64("seed", spec.seed);
  return spec;
}

TrainConfig train_config_from_config(const FlatConfig& cfg) {
  TrainConfig tc;
  tc.strategy = parse_strategy(cfg.get_string("strategy", strategy_name(tc.strategy)));
  tc.cell_size = cfg.get_int("cell_size", tc.cell_size);
  tc.batch_size = cfg.get_int("batch_size", tc.batch_size);
  tc.max_epochs = cfg.get_int("max_epochs", tc.max_epochs);
  tc.patience = cfg.get_int("patience", tc.patience);
  tc.seed = cfg.get_u64("seed", tc.seed);
  tc.clip_norm = cfg.get_double("clip_norm", tc.clip_norm);
  tc.alpha = cfg.get_double("alpha", tc.alpha);
  tc.beta1 = cfg.get_double("beta1", tc.beta1);
  tc.beta2 = cfg.get_double("beta2", tc.beta2);
  tc.eps = cfg.get_double("eps", tc.eps);
  tc.finetune_target_max_epochs =
      cfg.get_int("finetune_target_max_epochs", tc.finetune_target_max_epochs);
  return tc;
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"strategy", strategy_name(cfg.strategy)},
          {"cell_size", cfg.cell_size},
          {"batch_size", cfg.batch_size},
          {"max_epochs", cfg.max_epochs},
          {"patience", cfg.patience},
          {"seed", cfg.seed},
          {"clip_norm", cfg.clip_norm},
          {"alpha", cfg.alpha},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps},
          {"finetune_target_max_epochs", cfg.finetune_target_max_epochs}};
}

std::string metrics_to_csv(const RunMetrics& metrics) {
  bool with_gap = false;
  for (const auto& rec : metrics.epochs)
    if (std::isfinite(rec.bound_gap_mean)) with_gap = true;

  std::string csv = "# adacap.metrics v1\n";
  csv += "epoch,source_train_loss,target_train_loss,dev_loss";
  if (with_gap) csv += ",bound_gap_mean";
  csv += '\n';
  auto cell = [](double x) { return std::isfinite(x) ? fmt_double(x) : std::string(); };
  for (const auto& rec : metrics.epochs) {
    csv += std::to_string(rec.epoch);
    csv += ',' + cell(rec.source_train_loss);
    csv += ',' + cell(rec.target_train_loss);
    csv += ',' + cell(rec.dev_loss);
    if (with_gap) csv += ',' + cell(rec.bound_gap_mean);
    csv += '\n';
  }
  return csv;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

KeyValue parse_override(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like key=value, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

DomainTag parse_domain(const std::string& name) {
  if (name == "source") return DomainTag::Source;
  if (name == "target") return DomainTag::Target;
  throw std::invalid_argument("unknown domain '" + name + "' (expected source|target)");
}

// ---------------------------------------------------------------------------
// cmd_synth
// ---------------------------------------------------------------------------

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    FlatConfig cfg = args.spec_path.empty() ? FlatConfig()
                                            : FlatConfig::parse_file(args.spec_path);
    for (const auto& kv : args.overrides) cfg.set(kv.key, kv.value);
    const SynthSpec spec = synth_spec_from_config(cfg);
    fail_unknown_keys(cfg);

    const SynthCorpus corpus = synth_generate(spec);
    save_corpus(corpus, args.out_dir);

    if (corpus.source.train.empty()) err << "warning: source train split is empty\n";
    if (corpus.target.train.empty()) err << "warning: target train split is empty\n";

    out << "wrote " << args.out_dir << ": vocab " << corpus.vocab->size()
        << " tokens (hash " << std::hex << corpus.vocab->hash() << std::dec << ")\n";
    for (const DomainDataset* ds : {&corpus.source, &corpus.target}) {
      out << domain_name(ds->domain) << ": train=" << ds->train.size()
          << " dev=" << ds->dev.size() << " test=" << ds->test.size() << '\n';
    }
    for (const DomainDataset* ds : {&corpus.source, &corpus.target}) {
      out << "top-20 " << domain_name(ds->domain) << " train tokens:";
      for (const auto& [token, count] : top_tokens(ds->train, *corpus.vocab, 20))
        out << ' ' << token << '(' << count << ')';
      out << '\n';
    }
    return 0;
  });
}

// ---------------------------------------------------------------------------
// cmd_train
// ---------------------------------------------------------------------------

namespace {

struct LoadedData {
  std::shared_ptr<const Vocab> vocab;
  DomainDataset source, target;
};

LoadedData load_for_strategy(const std::string& data_dir, Strategy s) {
  LoadedData data;
  data.vocab = std::make_shared<const Vocab>(
      load_vocab((fs::path(data_dir) / "vocab.txt").string()));
  data.source.domain = DomainTag::Source;
  data.target.domain = DomainTag::Target;
  const bool need_source = s != Strategy::TgtOnly;
  const bool need_target = s != Strategy::SrcOnly;
  if (need_source) data.source = load_domain(data_dir, DomainTag::Source, data.vocab);
  if (need_target) data.target = load_domain(data_dir, DomainTag::Target, data.vocab);
  // An unused domain still carries the vocab so downstream checks have it.
  if (!data.source.vocab) data.source.vocab = data.vocab;
  if (!data.target.vocab) data.target.vocab = data.vocab;
  return data;
}

json manifest_skeleton(const char* command, const std::string& config_path,
                       const std::string& data_dir, const std::string& out_dir) {
  json doc;
  doc["format_version"] = 1;
  doc["kind"] = "adacap.manifest";
  doc["command"] = command;
  doc["config_path"] = config_path;
  doc["data_dir"] = data_dir;
  doc["out_dir"] = out_dir;
  doc["started_at"] = now_iso8601();
  doc["status"] = "running";
  return doc;
}

CheckpointMeta checkpoint_meta(const TrainConfig& cfg, const RunMetrics& metrics,
                               const Vocab& vocab) {
  CheckpointMeta meta;
  meta.strategy = strategy_name(cfg.strategy);
  meta.seed = cfg.seed;
  meta.vocab_hash = vocab.hash();
  meta.best_epoch = metrics.best_epoch;
  meta.best_dev_loss = metrics.best_dev_loss;
  meta.config = train_config_to_json(cfg);
  return meta;
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    if (args.data_dir.empty()) throw std::invalid_argument("train needs --data");
    FlatConfig cfg = args.config_path.empty() ? FlatConfig()
                                              : FlatConfig::parse_file(args.config_path);
    for (const auto& kv : args.overrides) cfg.set(kv.key, kv.value);
    const TrainConfig tc = train_config_from_config(cfg);
    // compare-only keys are legal in a shared config file; read and drop them
    cfg.get_int("seeds", 1);
    cfg.get_string_list("strategies", {});
    cfg.get_int_list("target_sizes", {});
    cfg.get_int("beam_width", 5);
    cfg.get_int("max_len", 30);
    cfg.get_int("jobs", 1);
    fail_unknown_keys(cfg);

    const LoadedData data = load_for_strategy(args.data_dir, tc.strategy);
    fs::create_directories(args.out_dir);
    const std::string manifest_path = (fs::path(args.out_dir) / "manifest.json").string();

    json manifest = manifest_skeleton("train", args.config_path, args.data_dir,
                                      args.out_dir);
    manifest["resolved_config"] = train_config_to_json(tc);
    write_json_file(manifest_path, manifest);

    RunResult result;
    try {
      result = run_strategy(tc, data.source, data.target);
    } catch (const NumericError& e) {
      manifest["status"] = "numeric_failure";
      manifest["failed_epoch"] = e.epoch;
      manifest["failed_batch"] = e.batch;
      manifest["finished_at"] = now_iso8601();
      write_json_file(manifest_path, manifest);
      throw;
    }

    write_text_file((fs::path(args.out_dir) / "metrics.csv").string(),
                    metrics_to_csv(result.metrics));
    save_checkpoint((fs::path(args.out_dir) / "checkpoint.json").string(),
                    result.params, checkpoint_meta(tc, result.metrics, *data.vocab));

    manifest["status"] = "complete";
    manifest["finished_at"] = now_iso8601();
    manifest["best_epoch"] = result.metrics.best_epoch;
    manifest["best_dev_loss"] = result.metrics.best_dev_loss;
    manifest["epochs_run"] = result.metrics.epochs.size();
    manifest["finetune_switch_epoch"] = result.metrics.finetune_switch_epoch;
    manifest["train_seconds"] = result.metrics.train_seconds;
    write_json_file(manifest_path, manifest);

    out << strategy_name(tc.strategy) << ": best epoch " << result.metrics.best_epoch
        << ", dev loss " << result.metrics.best_dev_loss << ", "
        << result.metrics.epochs.size() << " epochs in "
        << fmt_double(result.metrics.train_seconds) << " s\n";
    out << "checkpoint: " << (fs::path(args.out_dir) / "checkpoint.json").string()
        << '\n';
    return 0;
  });
}

// ---------------------------------------------------------------------------
// cmd_compare
// ---------------------------------------------------------------------------

namespace {

struct CompareEntry {
  Strategy strategy = Strategy::TgtOnly;
  int seed_index = 0;
  int target_size = -1;  // -1 = full target train split
};

struct CompareOutcome {
  RunMetrics metrics;
  EvalReport report;
};

std::string run_dir_name(const CompareEntry& e, std::uint64_t seed) {
  std::string name = strategy_name(e.strategy);
  name += "_s" + std::to_string(seed);
  if (e.target_size >= 0) name += "_n" + std::to_string(e.target_size);
  return name;
}

}  // namespace

int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    if (args.data_dir.empty()) throw std::invalid_argument("compare needs --data");
    FlatConfig cfg = args.config_path.empty() ? FlatConfig()
                                              : FlatConfig::parse_file(args.config_path);
    for (const auto& kv : args.overrides) cfg.set(kv.key, kv.value);
    const TrainConfig base = train_config_from_config(cfg);
    const int n_seeds = cfg.get_int("seeds", 1);
    std::vector<std::string> strategy_names;
    for (Strategy s : all_strategies()) strategy_names.push_back(strategy_name(s));
    strategy_names = cfg.get_string_list("strategies", strategy_names);
    const std::vector<int> sizes = cfg.get_int_list("target_sizes", {});
    const auto beam_width =
        static_cast<std::size_t>(cfg.get_int("beam_width", 5));
    const auto max_len = static_cast<std::size_t>(cfg.get_int("max_len", 30));
    const int jobs = cfg.get_int("jobs", 1);
    fail_unknown_keys(cfg);
    if (n_seeds < 1) throw std::invalid_argument("seeds must be >= 1");
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");

    std::vector<Strategy> strategies;
    for (const auto& name : strategy_names) strategies.push_back(parse_strategy(name));
    if (strategies.empty()) throw std::invalid_argument("no strategies selected");

    const auto vocab = std::make_shared<const Vocab>(
        load_vocab((fs::path(args.data_dir) / "vocab.txt").string()));
    const DomainDataset source = load_domain(args.data_dir, DomainTag::Source, vocab);
    const DomainDataset target = load_domain(args.data_dir, DomainTag::Target, vocab);
    for (int size : sizes)
      if (size < 0 || static_cast<std::size_t>(size) > target.train.size())
        throw std::invalid_argument(
            "target_train_size " + std::to_string(size) + " exceeds available " +
            std::to_string(target.train.size()));

    std::vector<int> size_axis = sizes.empty() ? std::vector<int>{-1} : sizes;
    std::vector<CompareEntry> entries;
    for (int size : size_axis)
      for (Strategy s : strategies)
        for (int k = 0; k < n_seeds; ++k) entries.push_back({s, k, size});

    fs::create_directories(args.out_dir);
    const std::string manifest_path =
        (fs::path(args.out_dir) / "manifest.json").string();
    json manifest = manifest_skeleton("compare", args.config_path, args.data_dir,
                                      args.out_dir);
    manifest["resolved_config"] = train_config_to_json(base);
    manifest["seeds"] = n_seeds;
    manifest["strategies"] = strategy_names;
    manifest["target_sizes"] = sizes;
    manifest["beam_width"] = beam_width;
    manifest["max_len"] = max_len;
    manifest["jobs"] = jobs;
    write_json_file(manifest_path, manifest);

    // Independent runs; worker threads only write their own slot.
    std::vector<CompareOutcome> outcomes(entries.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto do_run = [&](const CompareEntry& e) {
      TrainConfig tc = base;
      tc.strategy = e.strategy;
      tc.seed = base.seed + static_cast<std::uint64_t>(e.seed_index);
      DomainDataset target_run = target;
      if (e.target_size >= 0)
        target_run.train.resize(static_cast<std::size_t>(e.target_size));
      CompareOutcome outcome;
      RunResult run = run_strategy(tc, source, target_run);
      outcome.report =
          evaluate(run.params, target.test, DomainTag::Target, beam_width, max_len, 1);
      outcome.metrics = std::move(run.metrics);
      return outcome;
    };

    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= entries.size()) return;
        {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (first_error) return;
        }
        try {
          outcomes[i] = do_run(entries[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };

    const auto n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(jobs), entries.size());
    if (n_workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
    if (first_error) {
      manifest["status"] = "error";
      manifest["finished_at"] = now_iso8601();
      write_json_file(manifest_path, manifest);
      std::rethrow_exception(first_error);
    }

    // Per-run artifacts and the comparison CSV, in deterministic order.
    std::string csv = "# adacap.compare v1\n";
    csv += "strategy,seed,target_train_size,bleu1,bleu2,bleu3,bleu4,perplexity,"
           "best_epoch,best_dev_loss,train_seconds\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const CompareEntry& e = entries[i];
      const CompareOutcome& o = outcomes[i];
      const std::uint64_t seed = base.seed + static_cast<std::uint64_t>(e.seed_index);
      const int actual_size = e.target_size >= 0 ? e.target_size
                                                 : static_cast<int>(target.train.size());
      const fs::path run_dir = fs::path(args.out_dir) / "runs" / run_dir_name(e, seed);
      fs::create_directories(run_dir);
      write_text_file((run_dir / "metrics.csv").string(), metrics_to_csv(o.metrics));
      write_json_file((run_dir / "eval.json").string(), o.report.to_json());

      csv += std::string(strategy_name(e.strategy)) + ',' + std::to_string(seed) + ',' +
             std::to_string(actual_size) + ',' + fmt_double(o.report.bleu1) + ',' +
             fmt_double(o.report.bleu2) + ',' + fmt_double(o.report.bleu3) + ',' +
             fmt_double(o.report.bleu4) + ',' + fmt_double(o.report.perplexity) + ',' +
             std::to_string(o.metrics.best_epoch) + ',' +
             fmt_double(o.metrics.best_dev_loss) + ',' +
             fmt_double(o.metrics.train_seconds) + '\n';
    }
    write_text_file((fs::path(args.out_dir) / "comparison.csv").string(), csv);

    // Median summary per (size, strategy), CSV + aligned text.
    std::string summary = "# adacap.compare_summary v1\n";
    summary += "strategy,target_train_size,bleu1,bleu2,bleu3,bleu4,perplexity\n";
    std::ostringstream table;
    for (int size : size_axis) {
      const int actual_size =
          size >= 0 ? size : static_cast<int>(target.train.size());
      table << "target train size " << actual_size << " (" << n_seeds
            << " seed" << (n_seeds == 1 ? "" : "s") << ", medians)\n";
      table << std::left << std::setw(10) << "Strategy" << std::right
            << std::setw(8) << "B1" << std::setw(8) << "B2" << std::setw(8) << "B3"
            << std::setw(8) << "B4" << std::setw(10) << "PPL" << '\n';
      for (Strategy s : strategies) {
        std::vector<double> b[4], ppl;
        for (std::size_t i = 0; i < entries.size(); ++i) {
          if (entries[i].strategy != s || entries[i].target_size != size) continue;
          b[0].push_back(outcomes[i].report.bleu1);
          b[1].push_back(outcomes[i].report.bleu2);
          b[2].push_back(outcomes[i].report.bleu3);
          b[3].push_back(outcomes[i].report.bleu4);
          ppl.push_back(outcomes[i].report.perplexity);
        }
        const double m1 = median(b[0]), m2 = median(b[1]), m3 = median(b[2]),
                     m4 = median(b[3]), mp = median(ppl);
        summary += std::string(strategy_name(s)) + ',' + std::to_string(actual_size) +
                   ',' + fmt_double(m1) + ',' + fmt_double(m2) + ',' + fmt_double(m3) +
                   ',' + fmt_double(m4) + ',' + fmt_double(mp) + '\n';
        table << std::left << std::setw(10) << strategy_display(s) << std::right
              << std::fixed << std::setprecision(3) << std::setw(8) << m1
              << std::setw(8) << m2 << std::setw(8) << m3 << std::setw(8) << m4
              << std::setw(10) << std::setprecision(2) << mp << '\n';
        table.unsetf(std::ios::fixed);
      }
      table << '\n';
    }
    write_text_file((fs::path(args.out_dir) / "comparison_summary.csv").string(),
                    summary);
    write_text_file((fs::path(args.out_dir) / "comparison.txt").string(), table.str());
    out << table.str();

    manifest["status"] = "complete";
    manifest["finished_at"] = now_iso8601();
    manifest["runs"] = entries.size();
    write_json_file(manifest_path, manifest);
    return 0;
  });
}

// ---------------------------------------------------------------------------
// cmd_generate
// ---------------------------------------------------------------------------

namespace {

Vec ctx_from_json_line(const std::string& line, const std::string& where) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  try {
    if (rec.is_array()) return rec.get<Vec>();
    if (rec.is_object() && rec.contains("ctx")) return rec["ctx"].get<Vec>();
  } catch (const json::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
  throw std::runtime_error(where + ": expected [floats] or {\"ctx\": [floats]}");
}

}  // namespace

int cmd_generate(const GenerateArgs& args, std::istream& in, std::ostream& out,
                 std::ostream& err) {
  return guard(err, [&]() {
    const LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint_path);
    const Vocab vocab = load_vocab(args.vocab_path);
    check_vocab_hash(ckpt.meta, vocab);
    const DomainTag tag = parse_domain(args.domain);
    if (args.beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
    if (args.max_len < 1) throw std::invalid_argument("max_len must be >= 1");

    std::ifstream file;
    std::istream* source = &in;
    if (args.input_path != "-") {
      file.open(args.input_path);
      if (!file) throw std::runtime_error("cannot open " + args.input_path);
      source = &file;
    }

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(*source, line)) {
      ++line_no;
      if (line.empty()) continue;
      const std::string where = args.input_path + " line " + std::to_string(line_no);
      const Vec ctx = ctx_from_json_line(line, where);
      if (ctx.size() != ckpt.params.ctx_size())
        throw std::runtime_error(where + ": context dimension mismatch (expected " +
                                 std::to_string(ckpt.params.ctx_size()) + ", got " +
                                 std::to_string(ctx.size()) + ")");
      const DecodeResult res =
          beam_search(ckpt.params, ctx, args.beam_width, args.max_len, tag);
      std::string text;
      for (std::size_t i = 0; i < res.tokens.size(); ++i) {
        if (i) text += ' ';
        text += vocab.decode(res.tokens[i]);
      }
      out << text << '\n';
    }
    return 0;
  });
}

// ---------------------------------------------------------------------------
// cmd_select
// ---------------------------------------------------------------------------

int cmd_select(const SelectArgs& args, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    const LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint_path);
    const Vocab vocab = load_vocab(args.vocab_path);
    check_vocab_hash(ckpt.meta, vocab);
    const DomainTag tag = parse_domain(args.domain);

    std::ifstream in(args.questions_path);
    if (!in) throw std::runtime_error("cannot open " + args.questions_path);

    std::string line;
    std::size_t n_questions = 0, n_correct = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++n_questions;
      const std::string where = "question " + std::to_string(n_questions);
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
      if (!rec.is_object() || !rec.contains("ctx") || !rec.contains("choices") ||
          !rec.contains("answer"))
        throw std::runtime_error(where + ": record needs ctx, choices, answer");

      Vec ctx;
      std::vector<std::vector<int>> choices;
      std::size_t answer = 0;
      try {
        ctx = rec["ctx"].get<Vec>();
        answer = rec["answer"].get<std::size_t>();
        for (const auto& choice : rec["choices"]) {
          std::vector<int> ids{kBosId};
          for (const auto& tok : choice)
            ids.push_back(vocab.encode(tok.get<std::string>()));
          ids.push_back(kEosId);
          choices.push_back(std::move(ids));
        }
      } catch (const json::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
      if (choices.size() < 2)
        throw std::runtime_error(where + ": needs at least two choices");
      if (answer >= choices.size())
        throw std::runtime_error(where + ": answer index out of range");
      if (ctx.size() != ckpt.params.ctx_size())
        throw std::runtime_error(where + ": context dimension mismatch (expected " +
                                 std::to_string(ckpt.params.ctx_size()) + ", got " +
                                 std::to_string(ctx.size()) + ")");

      const std::size_t pick = select_answer(ckpt.params, ctx, choices, tag);
      if (pick == answer) ++n_correct;
      out << where << ": picked " << pick << ", correct " << answer << '\n';
    }
    if (n_questions == 0) throw std::runtime_error(args.questions_path + ": no questions");
    const double pct =
        100.0 * static_cast<double>(n_correct) / static_cast<double>(n_questions);
    char buf[64];
    std::snprintf(buf, sizeof buf, "accuracy: %.2f%% (%zu/%zu)\n", pct, n_correct,
                  n_questions);
    out << buf;
    return 0;
  });
}

// ---------------------------------------------------------------------------
// cmd_eval
// ---------------------------------------------------------------------------

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() {
    const LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint_path);
    const auto vocab = std::make_shared<const Vocab>(
        load_vocab((fs::path(args.data_dir) / "vocab.txt").string()));
    check_vocab_hash(ckpt.meta, *vocab);
    const DomainTag tag = parse_domain(args.domain);
    if (args.split != "train" && args.split != "dev" && args.split != "test")
      throw std::invalid_argument("unknown split '" + args.split +
                                  "' (expected train|dev|test)");

    const std::vector<Example> examples =
        load_split(*vocab, tag, args.split,
                   (fs::path(args.data_dir) / split_filename(tag, args.split)).string());
    const EvalReport report = evaluate(ckpt.params, examples, tag, args.beam_width,
                                       args.max_len, args.jobs);
    if (args.as_json)
      out << report.to_json().dump(2) << '\n';
    else
      out << EvalReport::csv_header() << '\n' << report.csv_row() << '\n';
    return 0;
  });
}

}  // namespace adacap::cli

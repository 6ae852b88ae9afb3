#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "adacap/checkpoint.hpp"
#include "adacap/data_io.hpp"
#include "adacap/decode_eval.hpp"
#include "adacap/optim_train.hpp"

#include "json.hpp"

namespace adacap::cli {

// ---------------------------------------------------------------------------
// Flat `key = value` config files ('#' comments, blank lines ignored).
// Typed getters track which keys were read; leftovers are reported as typos.
// ---------------------------------------------------------------------------

class FlatConfig {
 public:
  FlatConfig() = default;
  static FlatConfig parse_file(const std::string& path);
  static FlatConfig parse_text(const std::string& text, const std::string& origin);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // comma-separated lists
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback) const;
  std::vector<std::string> get_string_list(
      const std::string& key, const std::vector<std::string>& fallback) const;

  // keys present in the file but never read by any getter
  std::vector<std::string> untouched_keys() const;
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> touched_;
  std::string origin_ = "<config>";
};

// Config <-> domain structs. Both consume their keys from cfg.
SynthSpec synth_spec_from_config(const FlatConfig& cfg);
TrainConfig train_config_from_config(const FlatConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// Versioned per-epoch metrics CSV (the bound-gap column appears only when a
// run tracked it, i.e. the proposed strategy).
std::string metrics_to_csv(const RunMetrics& metrics);

double median(std::vector<double> values);

struct KeyValue {
  std::string key, value;
};
KeyValue parse_override(const std::string& arg);  // "key=value"

DomainTag parse_domain(const std::string& name);

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit code:
//   0 ok, 1 usage/config error, 2 data or format error, 3 numeric failure.
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string spec_path;  // empty = built-in defaults
  std::string out_dir = "data";
  std::vector<KeyValue> overrides;
};

struct TrainArgs {
  std::string config_path;  // empty = built-in defaults
  std::string data_dir;
  std::string out_dir = "run";
  std::vector<KeyValue> overrides;
};

struct CompareArgs {
  std::string config_path;
  std::string data_dir;
  std::string out_dir = "compare";
  std::vector<KeyValue> overrides;
};

struct GenerateArgs {
  std::string checkpoint_path;
  std::string vocab_path;
  std::string input_path;  // "-" reads stdin
  std::size_t beam_width = 5;
  std::size_t max_len = 30;
  std::string domain = "target";
};

struct SelectArgs {
  std::string checkpoint_path;
  std::string vocab_path;
  std::string questions_path;
  std::string domain = "target";
};

struct EvalArgs {
  std::string checkpoint_path;
  std::string data_dir;
  std::string domain = "target";
  std::string split = "test";
  std::size_t beam_width = 5;
  std::size_t max_len = 30;
  bool as_json = false;
  int jobs = 1;
};

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);
int cmd_generate(const GenerateArgs& args, std::istream& in, std::ostream& out,
                 std::ostream& err);
int cmd_select(const SelectArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

}  // namespace adacap::cli

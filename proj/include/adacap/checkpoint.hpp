#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "adacap/data_io.hpp"
#include "adacap/seq_model.hpp"

#include "json.hpp"

namespace adacap {

// ---------------------------------------------------------------------------
// Model checkpoints. One JSON document per checkpoint; every tensor is stored
// as raw IEEE-754 bits in lowercase hex (16 chars per double), so save/load
// round-trips are bitwise exact on any platform. The vocabulary hash from the
// training data rides along and is verified before a model touches data or a
// token table again.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  std::string strategy;  // informational: which training strategy produced it
  std::uint64_t seed = 0;
  std::uint64_t vocab_hash = 0;
  int best_epoch = -1;
  double best_dev_loss = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json config;  // resolved training configuration, verbatim
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ModelParams params;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Refuses a checkpoint/vocabulary pairing whose hashes disagree.
void check_vocab_hash(const CheckpointMeta& meta, const Vocab& vocab);

// Hex codec for double vectors (bit-exact, endian-independent).
std::string doubles_to_hex(const std::vector<double>& v);
std::vector<double> hex_to_doubles(const std::string& hex);

}  // namespace adacap

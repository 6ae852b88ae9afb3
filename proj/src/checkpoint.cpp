#include "adacap/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace adacap {

namespace {

using nlohmann::json;

constexpr char kHexDigits[] = "0123456789abcdef";

std::vector<std::pair<std::string, Matrix*>> named_tensors(ModelParams& p) {
  std::vector<std::pair<std::string, Matrix*>> out = {
      {"embedding", &p.embedding}, {"W0", &p.W0},
      {"lstm.W_ix", &p.lstm.W_ix}, {"lstm.W_ih", &p.lstm.W_ih},
      {"lstm.W_fx", &p.lstm.W_fx}, {"lstm.W_fh", &p.lstm.W_fh},
      {"lstm.W_ox", &p.lstm.W_ox}, {"lstm.W_oh", &p.lstm.W_oh},
      {"lstm.W_gx", &p.lstm.W_gx}, {"lstm.W_gh", &p.lstm.W_gh}};
  switch (p.head.kind()) {
    case HeadKind::Single:
      out.emplace_back("head.W", &p.head.single().W);
      break;
    case HeadKind::Dual:
      out.emplace_back("head.W_s", &p.head.dual().W_s);
      out.emplace_back("head.W_t", &p.head.dual().W_t);
      break;
    case HeadKind::Augmented:
      out.emplace_back("head.theta_g", &p.head.augmented().theta_g);
      out.emplace_back("head.theta_s", &p.head.augmented().theta_s);
      out.emplace_back("head.theta_t", &p.head.augmented().theta_t);
      break;
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_tensors(const ModelParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (auto& [name, m] : named_tensors(const_cast<ModelParams&>(p)))
    out.emplace_back(name, m);
  return out;
}

const char* head_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::Single: return "single";
    case HeadKind::Dual: return "dual";
    case HeadKind::Augmented: return "augmented";
  }
  throw std::logic_error("unknown head kind");
}

HeadKind head_from_name(const std::string& name) {
  if (name == "single") return HeadKind::Single;
  if (name == "dual") return HeadKind::Dual;
  if (name == "augmented") return HeadKind::Augmented;
  throw std::runtime_error("unknown head variant '" + name + "'");
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  throw std::runtime_error(std::string("bad hex character '") + c + "'");
}

}  // namespace

std::string doubles_to_hex(const std::vector<double>& v) {
  std::string out;
  out.reserve(v.size() * 16);
  for (double x : v) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int shift = 60; shift >= 0; shift -= 4)
      out.push_back(kHexDigits[(bits >> shift) & 0xF]);
  }
  return out;
}

std::vector<double> hex_to_doubles(const std::string& hex) {
  if (hex.size() % 16 != 0)
    throw std::runtime_error("hex payload length must be a multiple of 16");
  std::vector<double> out(hex.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (std::size_t j = 0; j < 16; ++j)
      bits = (bits << 4) | static_cast<std::uint64_t>(hex_value(hex[i * 16 + j]));
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["kind"] = "adacap.checkpoint";
  doc["strategy"] = meta.strategy;
  doc["seed"] = meta.seed;
  doc["vocab_hash"] = meta.vocab_hash;
  doc["best_epoch"] = meta.best_epoch;
  if (std::isfinite(meta.best_dev_loss))
    doc["best_dev_loss"] = meta.best_dev_loss;
  else
    doc["best_dev_loss"] = nullptr;
  doc["config"] = meta.config.is_null() ? json::object() : meta.config;
  doc["head"] = head_name(params.head.kind());
  doc["dims"] = {{"vocab", params.vocab_size()},
                 {"cell", params.cell_size()},
                 {"ctx", params.ctx_size()}};

  json tensors = json::object();
  for (const auto& [name, m] : named_tensors(params))
    tensors[name] = {{"rows", m->rows}, {"cols", m->cols}, {"hex", doubles_to_hex(m->data)}};
  doc["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (doc.value("kind", "") != "adacap.checkpoint")
    throw std::runtime_error(path + ": not an adacap checkpoint");
  if (doc.value("format_version", -1) != kCheckpointFormatVersion)
    throw std::runtime_error(path + ": unsupported format_version");

  LoadedCheckpoint loaded;
  loaded.meta.strategy = doc.value("strategy", "");
  loaded.meta.seed = doc.value("seed", std::uint64_t{0});
  loaded.meta.vocab_hash = doc.value("vocab_hash", std::uint64_t{0});
  loaded.meta.best_epoch = doc.value("best_epoch", -1);
  if (doc.contains("best_dev_loss") && doc["best_dev_loss"].is_number())
    loaded.meta.best_dev_loss = doc["best_dev_loss"].get<double>();
  if (doc.contains("config")) loaded.meta.config = doc["config"];

  if (!doc.contains("dims") || !doc.contains("tensors") || !doc.contains("head"))
    throw std::runtime_error(path + ": missing dims/head/tensors");
  ModelDims dims;
  dims.vocab = doc["dims"].value("vocab", std::size_t{0});
  dims.cell = doc["dims"].value("cell", std::size_t{0});
  dims.ctx = doc["dims"].value("ctx", std::size_t{0});
  if (dims.vocab == 0 || dims.cell == 0 || dims.ctx == 0)
    throw std::runtime_error(path + ": bad dims");

  const HeadKind kind = head_from_name(doc["head"].get<std::string>());
  ModelParams params;
  params.embedding = Matrix(dims.vocab, dims.cell);
  params.W0 = Matrix(dims.cell, dims.ctx);
  params.lstm = LstmParams(dims.cell);
  switch (kind) {
    case HeadKind::Single:
      params.head.v = SingleHead{Matrix(dims.vocab, dims.cell)};
      break;
    case HeadKind::Dual:
      params.head.v = DualHead{Matrix(dims.vocab, dims.cell), Matrix(dims.vocab, dims.cell)};
      break;
    case HeadKind::Augmented:
      params.head.v = AugmentedHead{Matrix(dims.vocab, dims.cell),
                                    Matrix(dims.vocab, dims.cell),
                                    Matrix(dims.vocab, dims.cell)};
      break;
  }

  const json& tensors = doc["tensors"];
  for (auto& [name, m] : named_tensors(params)) {
    if (!tensors.contains(name))
      throw std::runtime_error(path + ": missing tensor '" + name + "'");
    const json& t = tensors[name];
    if (t.value("rows", std::size_t{0}) != m->rows ||
        t.value("cols", std::size_t{0}) != m->cols)
      throw std::runtime_error(path + ": tensor '" + name + "' shape mismatch");
    std::vector<double> data;
    try {
      data = hex_to_doubles(t.value("hex", ""));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": tensor '" + name + "': " + e.what());
    }
    if (data.size() != m->size())
      throw std::runtime_error(path + ": tensor '" + name + "' payload size mismatch");
    m->data = std::move(data);
  }
  loaded.params = std::move(params);
  return loaded;
}

void check_vocab_hash(const CheckpointMeta& meta, const Vocab& vocab) {
  if (meta.vocab_hash == vocab.hash()) return;
  std::ostringstream msg;
  msg << "vocabulary mismatch: checkpoint was trained with hash " << std::hex
      << meta.vocab_hash << ", supplied vocab hashes to " << vocab.hash();
  throw std::runtime_error(msg.str());
}

}  // namespace adacap

#include <bit>
#include <cstdint>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "cae/trainer.hpp"

namespace cae {

namespace {

constexpr std::uint32_t kMagic = 0x31454143;  // the bytes "CAE1"
constexpr std::uint32_t kVersion = 1;

// All integers and doubles are serialized little-endian regardless of host.

void write_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 8);
}

void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

void read_bytes(std::istream& in, void* data, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError("checkpoint " + path + " is truncated");
  }
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  read_bytes(in, b, 4, path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  read_bytes(in, b, 8, path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in, const std::string& path) {
  return std::bit_cast<double>(read_u64(in, path));
}

std::string read_string(std::istream& in, const std::string& path) {
  const std::uint32_t n = read_u32(in, path);
  if (n > (1u << 20)) throw IoError("checkpoint " + path + " holds an implausible name length");
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, path);
  return s;
}

}  // namespace

std::uint64_t vocabulary_hash(const Vocabulary& vocab) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a offset basis
  auto fold = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (const auto& tok : vocab.id_to_token) {
    for (unsigned char c : tok) fold(c);
    fold('\n');
  }
  return h;
}

void save_checkpoint(const CaeModel& model, const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");

  write_u32(out, kMagic);
  write_u32(out, kVersion);
  write_u64(out, vocabulary_hash(vocab));
  write_u64(out, model.hidden);
  write_u64(out, model.vocab);

  const std::vector<Tensor> params = model.parameters();
  write_u64(out, params.size());
  for (const Tensor& p : params) {
    write_string(out, p.name());
    write_u32(out, static_cast<std::uint32_t>(p.rank()));
    for (std::size_t d : p.shape()) write_u64(out, d);
    for (double v : p.values()) write_f64(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint to " + path);
}

CaeModel load_checkpoint(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);

  if (read_u32(in, path) != kMagic) {
    throw IoError("checkpoint " + path + " has the wrong signature");
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw IoError("checkpoint " + path + " has unsupported version " + std::to_string(version));
  }
  const std::uint64_t stored_hash = read_u64(in, path);
  if (stored_hash != vocabulary_hash(vocab)) {
    throw ConfigError("checkpoint " + path + " was built against a different vocabulary");
  }
  const std::uint64_t hidden = read_u64(in, path);
  const std::uint64_t vocab_size = read_u64(in, path);
  if (vocab_size != vocab.size()) {
    throw ConfigError("checkpoint " + path + " stores vocabulary size " +
                      std::to_string(vocab_size) + " but the vocabulary has " +
                      std::to_string(vocab.size()));
  }

  TrainConfig cfg;
  cfg.hidden = hidden;
  cfg.vocab_max_size = vocab.max_size > 0 ? vocab.max_size : vocab.size();
  CaeModel model = init_model(cfg, vocab_size, 0);

  std::unordered_map<std::string, Tensor> by_name;
  for (const Tensor& p : model.parameters()) by_name.emplace(p.name(), p);

  const std::uint64_t count = read_u64(in, path);
  if (count != by_name.size()) {
    throw IoError("checkpoint " + path + " holds " + std::to_string(count) +
                  " parameters, expected " + std::to_string(by_name.size()));
  }
  std::unordered_set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, path);
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw IoError("checkpoint " + path + " names unknown parameter '" + name + "'");
    }
    if (!seen.insert(name).second) {
      throw IoError("checkpoint " + path + " repeats parameter '" + name + "'");
    }
    Tensor p = it->second;
    const std::uint32_t rank = read_u32(in, path);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = read_u64(in, path);
    if (shape != p.shape()) {
      throw IoError("checkpoint " + path + " stores shape " + shape_to_string(shape) + " for '" +
                    name + "', expected " + shape_to_string(p.shape()));
    }
    for (double& v : p.mutable_values()) v = read_f64(in, path);
  }
  return model;
}

}  // namespace cae

// SPDX-License-Identifier: Apache-2.0
// Checkpoint layout, all integers little-endian:
//   "VITTLECK"  u32 version
//   u64 n, n bytes of key-sorted JSON: config, variant, seed, step, divergence counter
//   u64 array count, then per array:
//     u32 name length, name bytes, u32 rank, rank x u64 dims, prod(dims) x f64
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "json.hpp"
#include "vittle/trainer.hpp"

namespace vittle {
namespace {

constexpr char kMagic[8] = {'V', 'I', 'T', 'T', 'L', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_bytes(std::ostream& out, const std::string& s) { out.write(s.data(), static_cast<std::streamsize>(s.size())); }

void put_array(std::ostream& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  put_bytes(out, name);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (double x : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::string str(std::size_t n) {
    if (n > (1u << 26)) throw std::runtime_error("checkpoint: implausible record length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

void Trainer::save(std::ostream& out) const {
  nlohmann::json header{{"config", nlohmann::json::parse(to_canonical_text(config_))},
                        {"variant", to_string(variant_)},
                        {"seed", seed_},
                        {"step", step_},
                        {"divergence_count", above_count_}};
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  const std::string text = header.dump();
  put_u64(out, text.size());
  put_bytes(out, text);

  const auto params = net_.parameters();
  put_u64(out, 3 * params.size() + 1);
  for (const auto& [name, p] : params) put_array(out, name, p.value());
  for (std::size_t i = 0; i < params.size(); ++i) put_array(out, "adam.m/" + params[i].first, m_[i]);
  for (std::size_t i = 0; i < params.size(); ++i) put_array(out, "adam.v/" + params[i].first, v_[i]);
  put_array(out, "state.initial_nll", Tensor::scalar(initial_nll_));
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

void Trainer::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  save(out);
}

Trainer Trainer::load(std::istream& in) {
  Reader r(in);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(r.u64()));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") + e.what());
  }
  const RunConfig config = parse_config(header.at("config").dump());
  Trainer t(config, variant_from_string(header.at("variant").get<std::string>()), header.at("seed").get<std::uint64_t>());
  t.step_ = header.at("step").get<std::size_t>();
  t.above_count_ = header.at("divergence_count").get<std::size_t>();

  auto params = t.net_.parameters();
  std::map<std::string, Tensor*> slots;
  for (std::size_t i = 0; i < params.size(); ++i) {
    slots[params[i].first] = &params[i].second.mutable_value();
    slots["adam.m/" + params[i].first] = &t.m_[i];
    slots["adam.v/" + params[i].first] = &t.v_[i];
  }
  Tensor initial = Tensor::scalar(0.0);
  slots["state.initial_nll"] = &initial;

  const std::uint64_t count = r.u64();
  std::set<std::string> seen;
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::string name = r.str(r.u32());
    auto slot = slots.find(name);
    if (slot == slots.end()) throw std::runtime_error("checkpoint: unexpected array '" + name + "'");
    if (!seen.insert(name).second) throw std::runtime_error("checkpoint: duplicate array '" + name + "'");
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != slot->second->shape()) {
      throw std::runtime_error("checkpoint: array '" + name + "' has shape " + shape_str(shape) + ", expected " +
                               shape_str(slot->second->shape()));
    }
    for (double& x : slot->second->data()) x = std::bit_cast<double>(r.u64());
  }
  if (seen.size() != slots.size()) {
    for (const auto& [name, _] : slots) {
      if (!seen.count(name)) throw std::runtime_error("checkpoint: missing array '" + name + "'");
    }
  }
  t.initial_nll_ = initial.item();
  return t;
}

Trainer Trainer::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return load(in);
}

}  // namespace vittle

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "igmc/graph.hpp"
#include "igmc/model.hpp"
#include "igmc/optim.hpp"
#include "igmc/subgraph.hpp"

namespace igmc {

// Checkpoints carry everything needed to reproduce predictions: model config,
// weights, the extraction settings, the rating scale, the epoch the snapshot
// was taken at, and (optionally) optimizer state for exact resume. All scalars
// are fixed-width little-endian; doubles go through their bit pattern, so a
// save/load cycle is bit-identical.
namespace ckpt_detail {

constexpr char kMagic[8] = {'I', 'G', 'M', 'C', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

inline void put_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(u >> (8 * i));
  put_bytes(out, buf, sizeof(T));
}

inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<uint64_t>(v)); }

inline void put_str(std::ostream& out, const std::string& s) {
  put_le(out, static_cast<uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

inline void get_bytes(std::istream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) throw DataError("checkpoint: truncated file");
}

template <typename T>
T get_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  get_bytes(in, buf, sizeof(T));
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<uint64_t>(in)); }

inline std::string get_str(std::istream& in) {
  const uint32_t n = get_le<uint32_t>(in);
  if (n > (1u << 20)) throw DataError("checkpoint: implausible string length");
  std::string s(n, '\0');
  get_bytes(in, s.data(), n);
  return s;
}

}  // namespace ckpt_detail

struct Checkpoint {
  ModelParams params;
  ExtractConfig extract;
  RatingScale scale;
  int epoch = 0;
  std::optional<AdamState> opt;
};

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const ExtractConfig& extract, const RatingScale& scale, int epoch,
                            const AdamState* opt = nullptr) {
  namespace d = ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  d::put_bytes(out, d::kMagic, sizeof(d::kMagic));
  d::put_le(out, d::kVersion);

  const ModelConfig& cfg = params.config;
  d::put_le<int32_t>(out, cfg.num_rating_types);
  d::put_le<int32_t>(out, cfg.hop);
  d::put_le<int32_t>(out, static_cast<int32_t>(cfg.layer_dims.size()));
  for (int v : cfg.layer_dims) d::put_le<int32_t>(out, v);
  d::put_le<int32_t>(out, cfg.num_bases);
  d::put_le<int32_t>(out, cfg.mlp_hidden);
  d::put_f64(out, cfg.mlp_dropout);
  d::put_le<uint8_t>(out, cfg.pooling == Pooling::TargetConcat ? 0 : 1);
  d::put_le<int32_t>(out, cfg.content_dim);
  d::put_le<uint8_t>(out, cfg.concat_pre_activation ? 1 : 0);

  d::put_le<int32_t>(out, extract.max_nodes_per_hop);
  d::put_le<int32_t>(out, scale.num_types());
  for (Real v : scale.values()) d::put_f64(out, v);
  d::put_le<int32_t>(out, epoch);

  auto named = params.named_tensors();
  d::put_le<uint32_t>(out, static_cast<uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    d::put_str(out, name);
    d::put_le<int32_t>(out, t.rows());
    d::put_le<int32_t>(out, t.cols());
    for (Real v : t.values()) d::put_f64(out, v);
  }

  d::put_le<uint8_t>(out, opt ? 1 : 0);
  if (opt) {
    d::put_le<int64_t>(out, opt->step);
    d::put_le<uint32_t>(out, static_cast<uint32_t>(opt->slots.size()));
    for (const auto& [name, slot] : opt->slots) {  // std::map: deterministic order
      d::put_str(out, name);
      d::put_le<uint64_t>(out, slot.m.size());
      for (Real v : slot.m) d::put_f64(out, v);
      for (Real v : slot.v) d::put_f64(out, v);
    }
  }
  if (!out) throw DataError("write failure on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  namespace d = ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  char magic[8];
  d::get_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, d::kMagic, sizeof(magic)) != 0)
    throw DataError("not a checkpoint file: " + path);
  const uint32_t version = d::get_le<uint32_t>(in);
  if (version != d::kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  cfg.num_rating_types = d::get_le<int32_t>(in);
  cfg.hop = d::get_le<int32_t>(in);
  const int32_t nl = d::get_le<int32_t>(in);
  if (nl < 1 || nl > 1024) throw DataError("checkpoint: implausible layer count");
  cfg.layer_dims.clear();
  for (int32_t i = 0; i < nl; ++i) cfg.layer_dims.push_back(d::get_le<int32_t>(in));
  cfg.num_bases = d::get_le<int32_t>(in);
  cfg.mlp_hidden = d::get_le<int32_t>(in);
  cfg.mlp_dropout = d::get_f64(in);
  cfg.pooling = d::get_le<uint8_t>(in) == 0 ? Pooling::TargetConcat : Pooling::Sum;
  cfg.content_dim = d::get_le<int32_t>(in);
  cfg.concat_pre_activation = d::get_le<uint8_t>(in) != 0;
  cfg.validate();

  Checkpoint c;
  c.extract.hop = cfg.hop;
  c.extract.max_nodes_per_hop = d::get_le<int32_t>(in);
  const int32_t ns = d::get_le<int32_t>(in);
  if (ns < 1 || ns > (1 << 20)) throw DataError("checkpoint: implausible scale size");
  std::vector<Real> values;
  for (int32_t i = 0; i < ns; ++i) values.push_back(d::get_f64(in));
  c.scale = RatingScale(std::move(values));
  c.epoch = d::get_le<int32_t>(in);

  // Allocate tensors with the right shapes, then overwrite from the file.
  c.params = init_params(cfg, 0);
  auto named = c.params.named_tensors();
  const uint32_t nt = d::get_le<uint32_t>(in);
  if (nt != named.size()) throw DataError("checkpoint: tensor count mismatch");
  for (auto& [name, t] : named) {
    const std::string got = d::get_str(in);
    if (got != name) throw DataError("checkpoint: expected tensor '" + name + "', found '" + got + "'");
    const int32_t rows = d::get_le<int32_t>(in);
    const int32_t cols = d::get_le<int32_t>(in);
    if (rows != t.rows() || cols != t.cols())
      throw DataError("checkpoint: shape mismatch for tensor '" + name + "'");
    for (Real& v : t.values()) v = d::get_f64(in);
  }

  if (d::get_le<uint8_t>(in) != 0) {
    AdamState st;
    st.step = d::get_le<int64_t>(in);
    const uint32_t nslots = d::get_le<uint32_t>(in);
    for (uint32_t i = 0; i < nslots; ++i) {
      const std::string name = d::get_str(in);
      const uint64_t n = d::get_le<uint64_t>(in);
      if (n > (uint64_t(1) << 32)) throw DataError("checkpoint: implausible slot size");
      AdamState::Slot slot;
      slot.m.resize(n);
      slot.v.resize(n);
      for (Real& v : slot.m) v = d::get_f64(in);
      for (Real& v : slot.v) v = d::get_f64(in);
      st.slots.emplace(name, std::move(slot));
    }
    c.opt = std::move(st);
  }
  return c;
}

}  // namespace igmc

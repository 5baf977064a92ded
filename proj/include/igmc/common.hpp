#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace igmc {

// 64-bit throughout; tolerances elsewhere in the project assume this.
using Real = double;

// Bad caller input (flag values, fractions out of range, shape mismatches).
class ArgumentError : public std::runtime_error {
public:
  explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent data (parse failures, duplicate edges, unknown ratings).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (diverged loss, NaN activations).
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64 finalizer; used to derive independent seed streams.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix64(mix_seed(a, b) ^ mix64(c));
}

// Keep multi-megabyte tensor blocks on the heap instead of round-tripping each
// one through mmap; glibc's default 128 KiB threshold makes the kernel zero
// fresh pages for every batch, which roughly doubles training time. Call once
// at startup from long-running entry points. No-op off glibc.
inline void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

// Deterministic RNG with pinned-down sampling routines. std::shuffle and the
// std:: distributions are implementation-defined, so everything that must be
// reproducible across toolchains draws through this class instead.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(mix64(seed ^ 0x5bd1e995u)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, n), n >= 1.
  uint64_t next_below(uint64_t n) {
    // rejection sampling on the top bits to avoid modulo bias
    uint64_t threshold = (~n + 1) % n;  // = 2^64 mod n
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform in [0, 1).
  Real next_unit() { return Real(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  Real next_uniform(Real lo, Real hi) { return lo + (hi - lo) * next_unit(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Keep a uniform sample of k elements (shuffle-prefix); keeps all when k >= size.
  template <typename T>
  void sample_prefix(std::vector<T>& v, size_t k) {
    if (v.size() <= k) return;
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + static_cast<size_t>(next_below(v.size() - i));
      std::swap(v[i], v[j]);
    }
    v.resize(k);
  }

private:
  uint64_t state_;
};

}  // namespace igmc

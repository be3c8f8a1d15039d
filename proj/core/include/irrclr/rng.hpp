#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace irrclr::rng {

// Every random draw in the pipeline comes from a Stream whose key is
// derived from the single top-level seed plus a chain of labels, e.g.
//   derive(seed, "pretrain.shuffle", epoch)
//   derive(seed, "augment", "pretrain", epoch, sample_index, view_index)
// The derivation is fixed here so that runs are reproducible bit-for-bit
// and independent streams never alias: each label is folded in with
// FNV-1a (strings) or splitmix64 (integers).

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fold(std::uint64_t key, std::uint64_t label) {
  return mix(key ^ label);
}
constexpr std::uint64_t fold(std::uint64_t key, std::string_view label) {
  return mix(key ^ fnv1a(label));
}

template <typename... Labels>
constexpr std::uint64_t derive(std::uint64_t seed, Labels... labels) {
  std::uint64_t key = mix(seed);
  ((key = fold(key, labels)), ...);
  return key;
}

// splitmix64 sequence generator. Uniform doubles use the top 53 bits, so
// draws do not depend on platform libm or libstdc++ distribution details.
class Stream {
public:
  explicit Stream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; the rare rejection keeps it unbiased.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = -n % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Box-Muller; the paired value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace irrclr::rng

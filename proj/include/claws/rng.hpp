#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace claws {

using Rng = std::mt19937_64;

/// Stream tags keep the generators used by different subsystems disjoint.
enum class RngStream : std::uint64_t {
  init = 1,
  dropout = 2,
  epoch_order = 3,
  kmeans = 4,
  synth = 5,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a sub-seed from a root seed, a stream tag and any number of
/// indices (epoch, iteration, video ordinal...). Order of indices matters.
constexpr std::uint64_t derive_seed(std::uint64_t root, RngStream stream,
                                    std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = mix64(root ^ mix64(static_cast<std::uint64_t>(stream)));
  for (std::uint64_t i : indices) h = mix64(h ^ mix64(i + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t root, RngStream stream,
                    std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(derive_seed(root, stream, indices));
}

}  // namespace claws

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "cmtf/tensor.hpp"

namespace cmtf {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t splitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by `path` under `master`, e.g.
/// streamSeed(seed, {kDataStream, dataset}) or streamSeed(seed, {kInitStream, dataset, init}).
constexpr std::uint64_t streamSeed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitMix64(master);
  for (std::uint64_t p : path) s = splitMix64(s ^ splitMix64(p + 0x632BE59BD9B4E019ULL));
  return s;
}

inline constexpr std::uint64_t kDataStream = 1;
inline constexpr std::uint64_t kInitStream = 2;

/// Standard normal entries, drawn in storage order.
inline Matrix randomNormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  boost::random::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = dist(rng);
  return m;
}

/// Entries in [0, 1).
inline Matrix randomUniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  boost::random::uniform_01<double> dist;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = dist(rng);
  return m;
}

}  // namespace cmtf

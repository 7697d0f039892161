#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "seqstate/numcore/tensor.hpp"

namespace seqstate::numcore {

// Seeded 64-bit Mersenne Twister with the handful of draws the project uses.
// Uniform draws are built directly from the engine's bits so they do not
// depend on the standard library's distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  // Child stream for an independent sub-task (e.g. one sweep run).
  std::uint64_t fork() { return engine_(); }

  Matrix uniform_matrix(Index rows, Index cols, double bound);
  Matrix normal_matrix(Index rows, Index cols, double sd = 1.0);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

// Mixes a base seed with a stream id so derived seeds never collide.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace seqstate::numcore

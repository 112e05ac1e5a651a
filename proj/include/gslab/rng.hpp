#pragma once

#include <cstdint>
#include <vector>

namespace gslab {

// Deterministic stream key. Streams for concurrent tasks are derived by
// chaining child() with distinct salts, so results never depend on scheduling
// or on how many workers consume them.
struct RngKey {
  std::uint64_t state = 0;

  static RngKey root(std::uint64_t seed);
  RngKey child(std::uint64_t salt) const;
};

// Counter-free generator over a key (splitmix64 core, Box-Muller normals).
// Not cryptographic; chosen for bit-identical behavior everywhere.
class Rng {
 public:
  explicit Rng(RngKey key) : state_(key.state) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform in (0, 1); never returns zero, safe under log().
  double uniform_open();
  // Standard normal.
  double normal();
  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n);
  // Gamma(alpha, 1) via Marsaglia-Tsang, boosted for alpha < 1.
  double gamma(double alpha);
  // Dirichlet(alpha, ..., alpha) over k components.
  std::vector<double> dirichlet(double alpha, int k);

  // Fisher-Yates shuffle of an index vector.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace gslab

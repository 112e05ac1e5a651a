#include "gslab/rng.hpp"

#include <cmath>

#include "gslab/errors.hpp"

namespace gslab {

namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngKey RngKey::root(std::uint64_t seed) { return RngKey{mix64(seed + kGamma)}; }

RngKey RngKey::child(std::uint64_t salt) const {
  return RngKey{mix64(state ^ mix64(salt * 0xd1342543de82ef95ULL + kGamma))};
}

std::uint64_t Rng::next_u64() {
  state_ += kGamma;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform_open();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw ContractError("uniform_int: n must be positive");
  // Rejection to avoid modulo bias.
  std::uint64_t un = static_cast<std::uint64_t>(n);
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

double Rng::gamma(double alpha) {
  if (alpha <= 0.0) throw ContractError("gamma: alpha must be positive");
  if (alpha < 1.0) {
    double u = uniform_open();
    return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = uniform_open();
    double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(double alpha, int k) {
  if (k <= 0) throw ContractError("dirichlet: k must be positive");
  std::vector<double> out(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (auto& g : out) {
    g = gamma(alpha);
    sum += g;
  }
  if (sum <= 0.0) {
    // All draws underflowed (tiny alpha); fall back to a one-hot split.
    out.assign(out.size(), 0.0);
    out[static_cast<std::size_t>(uniform_int(k))] = 1.0;
    return out;
  }
  for (auto& g : out) g /= sum;
  return out;
}

}  // namespace gslab

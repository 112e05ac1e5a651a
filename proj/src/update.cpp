#include "gslab/update.hpp"

#include <cmath>

#include "gslab/errors.hpp"

namespace gslab {

bool GradientUpdate::same_layout(const GradientUpdate& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != other.entries[i].first) return false;
    if (entries[i].second.shape() != other.entries[i].second.shape()) return false;
  }
  return true;
}

bool GradientUpdate::bitwise_equal(const GradientUpdate& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].second.values() != other.entries[i].second.values()) return false;
  }
  return true;
}

std::int64_t GradientUpdate::total_numel() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries) n += t.numel();
  return n;
}

bool GradientUpdate::all_finite() const {
  for (const auto& [name, t] : entries) {
    if (!t.all_finite()) return false;
  }
  return true;
}

GradientUpdate zeros_like(const GradientUpdate& g) {
  GradientUpdate out;
  out.entries.reserve(g.entries.size());
  for (const auto& [name, t] : g.entries) out.entries.emplace_back(name, Tensor::zeros(t.shape()));
  return out;
}

void axpy(GradientUpdate& y, double c, const GradientUpdate& x) {
  if (!y.same_layout(x)) throw ShapeError("GradientUpdate axpy: layouts differ");
  for (std::size_t i = 0; i < y.entries.size(); ++i) {
    axpy(y.entries[i].second, c, x.entries[i].second);
  }
}

void scale_inplace(GradientUpdate& g, double c) {
  for (auto& [name, t] : g.entries) {
    for (double& v : t.values()) v *= c;
  }
}

double dot_flat(const GradientUpdate& a, const GradientUpdate& b) {
  if (!a.same_layout(b)) throw ShapeError("GradientUpdate dot: layouts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    s += dot(a.entries[i].second, b.entries[i].second);
  }
  return s;
}

double l2_norm_flat(const GradientUpdate& g) {
  double s = 0.0;
  for (const auto& [name, t] : g.entries) s += dot(t, t);
  return std::sqrt(s);
}

}  // namespace gslab

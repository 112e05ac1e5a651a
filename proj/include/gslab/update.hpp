#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gslab/tensor.hpp"

namespace gslab {

// Per-parameter gradient tensors in the owning model's layout order.
struct GradientUpdate {
  std::vector<std::pair<std::string, Tensor>> entries;

  std::size_t size() const { return entries.size(); }
  bool same_layout(const GradientUpdate& other) const;
  bool bitwise_equal(const GradientUpdate& other) const;
  std::int64_t total_numel() const;
  bool all_finite() const;
};

GradientUpdate zeros_like(const GradientUpdate& g);
// y += c * x over every entry.
void axpy(GradientUpdate& y, double c, const GradientUpdate& x);
void scale_inplace(GradientUpdate& g, double c);
double dot_flat(const GradientUpdate& a, const GradientUpdate& b);
double l2_norm_flat(const GradientUpdate& g);

}  // namespace gslab

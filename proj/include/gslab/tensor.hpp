#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace gslab {

// Dense row-major array of doubles. Immutable by convention once built;
// all library code treats tensors as values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor from(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(int rows, int cols, std::vector<double> data);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  int rows() const;
  int cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(int r, int c);
  double at(int r, int c) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& shape);
std::int64_t shape_numel(const std::vector<int>& shape);

// Elementwise kernels. Shapes must match exactly; mismatches throw ShapeError
// naming both shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor step(const Tensor& a);  // 1 where a > 0, else 0
Tensor sign(const Tensor& a);  // -1 / 0 / +1

// y += c * x, in place.
void axpy(Tensor& y, double c, const Tensor& x);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double sum_all(const Tensor& a);

// Rank-2 linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Axis reductions and their inverses on rank-2 tensors.
Tensor reduce_rows(const Tensor& a);              // [B,n] -> [n], sum over rows
Tensor row_broadcast(const Tensor& v, int rows);  // [n] -> [rows,n]
Tensor reduce_cols(const Tensor& a);              // [B,n] -> [B], sum over cols
Tensor col_broadcast(const Tensor& v, int cols);  // [B] -> [B,cols]

Tensor broadcast_scalar(const Tensor& s, const std::vector<int>& shape);
Tensor reshape(const Tensor& a, std::vector<int> shape);

Tensor clamp01(const Tensor& a);

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
void check_finite(const Tensor& a, const char* what);

}  // namespace gslab

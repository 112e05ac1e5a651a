#include "gslab/tensor.hpp"

#include <cmath>
#include <utility>

#include "gslab/errors.hpp"

namespace gslab {

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(std::vector<int> shape, double v) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_.assign(static_cast<std::size_t>(shape_numel(t.shape_)), v);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return from({n}, std::move(v));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> data) {
  return from({rows, cols}, std::move(data));
}

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2, shape " + shape_str(shape_));
  return shape_[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2, shape " + shape_str(shape_));
  return shape_[1];
}

double& Tensor::at(int r, int c) {
  return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) +
               static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
  return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) +
               static_cast<std::size_t>(c)];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void check_finite(const Tensor& a, const char* what) {
  if (!a.all_finite()) throw NumericalError(std::string(what) + ": non-finite values");
}

namespace {

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, const char* op, F f) {
  check_same_shape(a, b, op);
  Tensor out = a;
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = f(po[i], pb[i]);
  return out;
}

template <typename F>
Tensor map1(const Tensor& a, F f) {
  Tensor out = a;
  double* po = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = f(po[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return map2(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return map2(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return map2(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return map2(a, b, "div", [](double x, double y) { return x / y; });
}

Tensor neg(const Tensor& a) {
  return map1(a, [](double x) { return -x; });
}

Tensor scale(const Tensor& a, double c) {
  return map1(a, [c](double x) { return c * x; });
}

Tensor relu(const Tensor& a) {
  return map1(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor exp(const Tensor& a) {
  return map1(a, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  return map1(a, [](double x) { return std::log(x); });
}

Tensor sqrt(const Tensor& a) {
  return map1(a, [](double x) { return std::sqrt(x); });
}

Tensor abs(const Tensor& a) {
  return map1(a, [](double x) { return std::fabs(x); });
}

Tensor step(const Tensor& a) {
  return map1(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sign(const Tensor& a) {
  return map1(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

void axpy(Tensor& y, double c, const Tensor& x) {
  check_same_shape(y, x, "axpy");
  double* py = y.data();
  const double* px = x.data();
  for (std::int64_t i = 0; i < y.numel(); ++i) py[i] += c * px[i];
}

double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  const double* pa = a.data();
  const double* pb = b.data();
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += pa[i] * pb[i];
  return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double sum_all(const Tensor& a) {
  const double* p = a.data();
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) s += p[i];
  return s;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double av = pa[static_cast<std::size_t>(i) * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<std::size_t>(kk) * n;
      double* orow = po + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: not rank-2, shape " + shape_str(a.shape()));
  const int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor reduce_rows(const Tensor& a) {
  const int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j) += a.at(i, j);
  return out;
}

Tensor row_broadcast(const Tensor& v, int rows) {
  if (v.rank() != 1) throw ShapeError("row_broadcast: not rank-1, shape " + shape_str(v.shape()));
  const int n = v.shape()[0];
  Tensor out = Tensor::zeros({rows, n});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = v.at(j);
  return out;
}

Tensor reduce_cols(const Tensor& a) {
  const int r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({r});
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += a.at(i, j);
    out.at(i) = s;
  }
  return out;
}

Tensor col_broadcast(const Tensor& v, int cols) {
  if (v.rank() != 1) throw ShapeError("col_broadcast: not rank-1, shape " + shape_str(v.shape()));
  const int b = v.shape()[0];
  Tensor out = Tensor::zeros({b, cols});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < cols; ++j) out.at(i, j) = v.at(i);
  return out;
}

Tensor broadcast_scalar(const Tensor& s, const std::vector<int>& shape) {
  if (s.numel() != 1) {
    throw ShapeError("broadcast_scalar: source is not scalar, shape " + shape_str(s.shape()));
  }
  return Tensor::full(shape, s.at(0));
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return Tensor::from(std::move(shape), a.values());
}

Tensor clamp01(const Tensor& a) {
  return map1(a, [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); });
}

}  // namespace gslab

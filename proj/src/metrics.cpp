#include "gslab/metrics.hpp"

#include <cmath>
#include <limits>

#include "gslab/errors.hpp"

namespace gslab {

double mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  if (a.numel() == 0) throw ContractError("mse: empty tensors");
  double s = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = a.at(i) - b.at(i);
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

double psnr(const Tensor& a, const Tensor& b, double max_value) {
  if (max_value <= 0.0) throw ContractError("psnr: max_value must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / m);
}

double ssim(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ssim");
  const std::int64_t n = a.numel();
  if (n == 0) throw ContractError("ssim: empty tensors");

  constexpr double kC1 = 0.01 * 0.01;  // (0.01 * L)^2, L = 1
  constexpr double kC2 = 0.03 * 0.03;

  double mu_a = 0.0, mu_b = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    mu_a += a.at(i);
    mu_b += b.at(i);
  }
  mu_a /= static_cast<double>(n);
  mu_b /= static_cast<double>(n);

  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double da = a.at(i) - mu_a;
    const double db = b.at(i) - mu_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  var_a /= static_cast<double>(n);
  var_b /= static_cast<double>(n);
  cov /= static_cast<double>(n);

  return ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
         ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

MetricsBundle compute_metrics(const Tensor& reconstruction, const Tensor& truth) {
  MetricsBundle m;
  m.mse = mse(reconstruction, truth);
  m.psnr = psnr(reconstruction, truth);
  m.ssim = ssim(reconstruction, truth);
  return m;
}

}  // namespace gslab

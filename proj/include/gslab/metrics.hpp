#pragma once

#include "gslab/tensor.hpp"

namespace gslab {

struct MetricsBundle {
  double mse = 0.0;
  double psnr = 0.0;  // dB; +infinity when the images are identical
  double ssim = 0.0;
};

// Mean of squared pixel differences. Shapes must match.
double mse(const Tensor& a, const Tensor& b);

// 10 * log10(max_value^2 / mse); +infinity at mse 0.
double psnr(const Tensor& a, const Tensor& b, double max_value = 1.0);

// Global single-window SSIM with C1=(0.01*L)^2, C2=(0.03*L)^2, L=1. Images
// here are at most 16x16, smaller than the usual 11x11 sliding window, so one
// window covers the whole image.
double ssim(const Tensor& a, const Tensor& b);

MetricsBundle compute_metrics(const Tensor& reconstruction, const Tensor& truth);

}  // namespace gslab

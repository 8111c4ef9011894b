#pragma once

#include "mmgs/ad/tensor.hpp"

#include <cstdint>
#include <span>

namespace mmgs::pipeline {

inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// 10 log10(1 / MSE) over all values, capped at 99 dB.
template <class T>
double psnr(std::span<const T> a, std::span<const T> b);

/// PSNR over the pixels whose mask entry is nonzero (all three channels);
/// the full image when the mask is empty.
template <class T>
double masked_psnr(std::span<const T> a, std::span<const T> b, std::span<const std::uint8_t> mask);

/// Single-scale SSIM of two H x W x 3 images in [0, 1]: 11 x 11 Gaussian
/// window (sigma 1.5), averaged over channels and window positions. Valid
/// positions only when the image fits the window, otherwise one window per
/// pixel with reflected borders.
template <class T>
double ssim(std::span<const T> a, std::span<const T> b, int width, int height);

/// Differentiable SSIM(x, y) for x [H x W x 3]; y is constant.
template <std::floating_point T>
ad::Tensor<T> ssim(const ad::Tensor<T>& x, std::span<const T> y);

/// Mean |x - y| over masked pixels and their three channels; zero when the
/// mask is empty. Differentiable w.r.t. x.
template <std::floating_point T>
ad::Tensor<T> masked_l1(const ad::Tensor<T>& x, std::span<const T> y, std::span<const std::uint8_t> mask);

/// Pixels outside the mask set to zero (black) in a copy of an H x W x 3 image.
template <class T>
std::vector<T> composite_black(std::span<const T> image, std::span<const std::uint8_t> mask);

} // namespace mmgs::pipeline

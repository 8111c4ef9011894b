#include "mmgs/pipeline/metrics.hpp"

#include "mmgs/common/error.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <vector>

namespace mmgs::pipeline {

namespace {

std::array<double, kSsimWindow> gaussian_window_1d() {
    std::array<double, kSsimWindow> w{};
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        w[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    for (auto& x : w) x /= sum;
    return w;
}

int reflect(int i, int n) {
    if (n == 1) {
        return 0;
    }
    while (i < 0 || i >= n) {
        i = i < 0 ? -i : 2 * (n - 1) - i;
    }
    return i;
}

/// Window taps of every SSIM position: pixel indices and weights.
struct SsimLayout {
    std::size_t positions = 0;
    std::vector<std::uint32_t> pixel;  // positions x 121
    std::vector<double> weight;        // 121, shared by all positions

    SsimLayout(int width, int height) {
        const auto w1 = gaussian_window_1d();
        constexpr int k = kSsimWindow;
        for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
                weight.push_back(w1[dy] * w1[dx]);
            }
        }
        const bool valid = width >= k && height >= k;
        const int py_count = valid ? height - k + 1 : height;
        const int px_count = valid ? width - k + 1 : width;
        const int shift = valid ? 0 : -k / 2;
        positions = static_cast<std::size_t>(py_count) * px_count;
        pixel.reserve(positions * k * k);
        for (int py = 0; py < py_count; ++py) {
            for (int px = 0; px < px_count; ++px) {
                for (int dy = 0; dy < k; ++dy) {
                    const int y = reflect(py + dy + shift, height);
                    for (int dx = 0; dx < k; ++dx) {
                        const int x = reflect(px + dx + shift, width);
                        pixel.push_back(static_cast<std::uint32_t>(y * width + x));
                    }
                }
            }
        }
    }
};

struct SsimStats {
    double mx, my, a1, a2, b1, b2;
    double value() const { return (a1 * a2) / (b1 * b2); }
};

template <class T>
SsimStats ssim_stats(const SsimLayout& layout, std::size_t p, int c, const T* x, const T* y) {
    constexpr int taps = kSsimWindow * kSsimWindow;
    const std::uint32_t* idx = &layout.pixel[p * taps];
    double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
    for (int t = 0; t < taps; ++t) {
        const double w = layout.weight[t];
        const double a = x[idx[t] * 3 + c], b = y[idx[t] * 3 + c];
        mx += w * a;
        my += w * b;
        xx += w * a * a;
        yy += w * b * b;
        xy += w * a * b;
    }
    const double sxx = xx - mx * mx, syy = yy - my * my, sxy = xy - mx * my;
    return {mx, my, 2 * mx * my + kSsimC1, 2 * sxy + kSsimC2, mx * mx + my * my + kSsimC1, sxx + syy + kSsimC2};
}

void check_image(std::size_t a, std::size_t b, int width, int height) {
    if (width <= 0 || height <= 0 || a != b || a != static_cast<std::size_t>(width) * height * 3) {
        throw ContractViolation("SSIM needs two H x W x 3 images of the same size");
    }
}

} // namespace

template <class T>
double psnr(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size() || a.empty()) {
        throw ContractViolation("PSNR needs two non-empty images of the same size");
    }
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    return mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

template <class T>
double masked_psnr(std::span<const T> a, std::span<const T> b, std::span<const std::uint8_t> mask) {
    if (a.size() != b.size() || a.size() != mask.size() * 3) {
        throw ContractViolation("masked PSNR: image and mask sizes differ");
    }
    std::vector<T> ma, mb;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (mask[p]) {
            for (int c = 0; c < 3; ++c) {
                ma.push_back(a[p * 3 + c]);
                mb.push_back(b[p * 3 + c]);
            }
        }
    }
    return ma.empty() ? psnr(a, b) : psnr<T>(ma, mb);
}

template <class T>
double ssim(std::span<const T> a, std::span<const T> b, int width, int height) {
    check_image(a.size(), b.size(), width, height);
    const SsimLayout layout(width, height);
    double total = 0;
    for (std::size_t p = 0; p < layout.positions; ++p) {
        for (int c = 0; c < 3; ++c) {
            total += ssim_stats(layout, p, c, a.data(), b.data()).value();
        }
    }
    return total / static_cast<double>(layout.positions * 3);
}

template <std::floating_point T>
ad::Tensor<T> ssim(const ad::Tensor<T>& x, std::span<const T> y) {
    if (x.rank() != 3 || x.dim(2) != 3) {
        throw ContractViolation("SSIM expects an H x W x 3 tensor, got " + ad::shape_string(x.shape()));
    }
    const int height = static_cast<int>(x.dim(0)), width = static_cast<int>(x.dim(1));
    check_image(x.numel(), y.size(), width, height);
    auto layout = std::make_shared<SsimLayout>(width, height);
    const std::size_t n = layout->positions * 3;
    // Per (position, channel): alpha, beta, gamma of dS/dx_q = w (alpha + beta y_q + gamma x_q).
    auto coeff = std::make_shared<std::vector<double>>(n * 3);
    double total = 0;
    for (std::size_t p = 0; p < layout->positions; ++p) {
        for (int c = 0; c < 3; ++c) {
            const auto s = ssim_stats(*layout, p, c, x.data().data(), y.data());
            const double v = s.value();
            total += v;
            double* k = &(*coeff)[(p * 3 + c) * 3];
            k[0] = v * (2 * s.my / s.a1 - 2 * s.my / s.a2 - 2 * s.mx / s.b1 + 2 * s.mx / s.b2);
            k[1] = 2 * v / s.a2;
            k[2] = -2 * v / s.b2;
        }
    }
    std::vector<T> target(y.begin(), y.end());
    return ad::make_result<T>(
        {1}, {static_cast<T>(total / static_cast<double>(n))}, {x},
        [layout, coeff, n, target = std::move(target)](ad::detail::Node<T>& node) {
            T* g = ad::parent_grad(node, 0);
            if (!g) {
                return;
            }
            const auto& xv = node.parents[0]->value;
            const double scale = static_cast<double>(node.grad[0]) / static_cast<double>(n);
            constexpr int taps = kSsimWindow * kSsimWindow;
            for (std::size_t p = 0; p < layout->positions; ++p) {
                const std::uint32_t* idx = &layout->pixel[p * taps];
                for (int c = 0; c < 3; ++c) {
                    const double* k = &(*coeff)[(p * 3 + c) * 3];
                    for (int t = 0; t < taps; ++t) {
                        const std::size_t q = idx[t] * 3 + c;
                        g[q] += static_cast<T>(scale * layout->weight[t] *
                                               (k[0] + k[1] * target[q] + k[2] * xv[q]));
                    }
                }
            }
        });
}

template <std::floating_point T>
ad::Tensor<T> masked_l1(const ad::Tensor<T>& x, std::span<const T> y, std::span<const std::uint8_t> mask) {
    if (x.numel() != y.size() || y.size() != mask.size() * 3) {
        throw ContractViolation("masked L1: image and mask sizes differ");
    }
    std::size_t count = 0;
    double total = 0;
    const auto xv = x.data();
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (mask[p]) {
            for (int c = 0; c < 3; ++c) {
                total += std::abs(static_cast<double>(xv[p * 3 + c]) - static_cast<double>(y[p * 3 + c]));
            }
            count += 3;
        }
    }
    const double mean = count ? total / static_cast<double>(count) : 0.0;
    std::vector<T> target(y.begin(), y.end());
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    return ad::make_result<T>({1}, {static_cast<T>(mean)}, {x},
                              [count, target = std::move(target), m = std::move(m)](ad::detail::Node<T>& node) {
                                  T* g = ad::parent_grad(node, 0);
                                  if (!g || count == 0) {
                                      return;
                                  }
                                  const auto& xv = node.parents[0]->value;
                                  const T scale = node.grad[0] / static_cast<T>(count);
                                  for (std::size_t p = 0; p < m.size(); ++p) {
                                      if (!m[p]) {
                                          continue;
                                      }
                                      for (int c = 0; c < 3; ++c) {
                                          const std::size_t q = p * 3 + c;
                                          const T d = xv[q] - target[q];
                                          g[q] += d > T(0) ? scale : (d < T(0) ? -scale : T(0));
                                      }
                                  }
                              });
}

template <class T>
std::vector<T> composite_black(std::span<const T> image, std::span<const std::uint8_t> mask) {
    if (image.size() != mask.size() * 3) {
        throw ContractViolation("composite: image and mask sizes differ");
    }
    std::vector<T> out(image.begin(), image.end());
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) {
            out[p * 3] = out[p * 3 + 1] = out[p * 3 + 2] = T(0);
        }
    }
    return out;
}

#define MMGS_INSTANTIATE_METRICS(T)                                                                \
    template double psnr(std::span<const T>, std::span<const T>);                                  \
    template double masked_psnr(std::span<const T>, std::span<const T>, std::span<const std::uint8_t>); \
    template double ssim(std::span<const T>, std::span<const T>, int, int);                        \
    template ad::Tensor<T> ssim(const ad::Tensor<T>&, std::span<const T>);                         \
    template ad::Tensor<T> masked_l1(const ad::Tensor<T>&, std::span<const T>,                     \
                                     std::span<const std::uint8_t>);                               \
    template std::vector<T> composite_black(std::span<const T>, std::span<const std::uint8_t>);

MMGS_INSTANTIATE_METRICS(float)
MMGS_INSTANTIATE_METRICS(double)

} // namespace mmgs::pipeline

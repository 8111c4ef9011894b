#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace mmgs::ad {

/// Forward-mode dual number carrying N directional derivatives.
///
/// Used for per-primitive Jacobians of small closed-form maps (projection,
/// covariance assembly, SH basis) where a hand-written chain rule would be
/// long and error-prone.
template <class T, std::size_t N>
struct Dual {
    T v{};
    std::array<T, N> d{};

    Dual() = default;
    Dual(T value) : v(value) {} // NOLINT(google-explicit-constructor)

    static Dual variable(T value, std::size_t slot) {
        Dual out(value);
        out.d[slot] = T(1);
        return out;
    }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        const T inv = T(1) / o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] - v * inv * o.d[i]) * inv;
        v *= inv;
        return *this;
    }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
    friend Dual operator/(Dual a, const Dual& b) { return a /= b; }
    friend Dual operator-(Dual a) {
        a.v = -a.v;
        for (auto& x : a.d) x = -x;
        return a;
    }
    friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
};

template <class T, std::size_t N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
    Dual<T, N> out(std::sqrt(x.v));
    const T scale = T(0.5) / out.v;
    for (std::size_t i = 0; i < N; ++i) out.d[i] = x.d[i] * scale;
    return out;
}

template <class T, std::size_t N>
Dual<T, N> exp(const Dual<T, N>& x) {
    Dual<T, N> out(std::exp(x.v));
    for (std::size_t i = 0; i < N; ++i) out.d[i] = x.d[i] * out.v;
    return out;
}

/// Value part for plain scalars and duals alike.
template <class T>
T value_of(T x) {
    return x;
}
template <class T, std::size_t N>
T value_of(const Dual<T, N>& x) {
    return x.v;
}

} // namespace mmgs::ad

#pragma once

#include <array>
#include <cmath>
#include <type_traits>

namespace alp {

// Forward-mode dual number with N tangent components. The renderer evaluates
// the per-pixel shading chain once in Dual<N>, where the tangents are the
// pixel-local parameters (pose and material), and scatters the result into
// global gradient buffers afterwards. Dual<0> degenerates to a plain double.
template <int N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}

    static Dual variable(double value, int index) {
        Dual r(value);
        r.d[index] = 1.0;
        return r;
    }

    Dual &operator+=(const Dual &o) {
        v += o.v;
        for (int i = 0; i < N; i++) d[i] += o.d[i];
        return *this;
    }
    Dual &operator-=(const Dual &o) {
        v -= o.v;
        for (int i = 0; i < N; i++) d[i] -= o.d[i];
        return *this;
    }
    Dual &operator*=(const Dual &o) {
        for (int i = 0; i < N; i++) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual &operator*=(double s) {
        v *= s;
        for (int i = 0; i < N; i++) d[i] *= s;
        return *this;
    }
    Dual &operator/=(const Dual &o) {
        // The value is divided directly so that it rounds like plain doubles.
        double q = v / o.v;
        double inv = 1.0 / o.v;
        for (int i = 0; i < N; i++) d[i] = (d[i] - q * o.d[i]) * inv;
        v = q;
        return *this;
    }
};

template <class T>
struct is_dual : std::false_type {};
template <int N>
struct is_dual<Dual<N>> : std::true_type {};

// Scalars that may multiply vectors: plain arithmetic types and duals.
template <class S>
concept Scalar = std::is_arithmetic_v<S> || is_dual<S>::value;

inline double value(double x) { return x; }
template <int N>
double value(const Dual<N> &x) { return x.v; }

template <int N>
Dual<N> operator-(const Dual<N> &a) {
    Dual<N> r;
    r.v = -a.v;
    for (int i = 0; i < N; i++) r.d[i] = -a.d[i];
    return r;
}
template <int N>
Dual<N> operator+(Dual<N> a, const Dual<N> &b) { return a += b; }
template <int N>
Dual<N> operator-(Dual<N> a, const Dual<N> &b) { return a -= b; }
template <int N>
Dual<N> operator*(Dual<N> a, const Dual<N> &b) { return a *= b; }
template <int N>
Dual<N> operator/(Dual<N> a, const Dual<N> &b) { return a /= b; }

template <int N>
Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N>
Dual<N> operator+(double a, Dual<N> b) { b.v += a; return b; }
template <int N>
Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N>
Dual<N> operator-(double a, const Dual<N> &b) { Dual<N> r = -b; r.v += a; return r; }
template <int N>
Dual<N> operator*(Dual<N> a, double b) { return a *= b; }
template <int N>
Dual<N> operator*(double a, Dual<N> b) { return b *= a; }
template <int N>
Dual<N> operator/(Dual<N> a, double b) {
    a.v /= b;
    for (int i = 0; i < N; i++) a.d[i] /= b;
    return a;
}
template <int N>
Dual<N> operator/(double a, const Dual<N> &b) {
    Dual<N> r;
    r.v = a / b.v;
    double s = -r.v / b.v;
    for (int i = 0; i < N; i++) r.d[i] = s * b.d[i];
    return r;
}

template <int N>
bool operator<(const Dual<N> &a, const Dual<N> &b) { return a.v < b.v; }
template <int N>
bool operator>(const Dual<N> &a, const Dual<N> &b) { return a.v > b.v; }

namespace detail {
template <int N>
Dual<N> chain(const Dual<N> &a, double f, double df) {
    Dual<N> r;
    r.v = f;
    for (int i = 0; i < N; i++) r.d[i] = df * a.d[i];
    return r;
}
} // namespace detail

using std::acos;
using std::atan2;
using std::cos;
using std::exp;
using std::log;
using std::log1p;
using std::sin;
using std::sqrt;

template <int N>
Dual<N> sqrt(const Dual<N> &a) {
    double s = std::sqrt(a.v);
    return detail::chain(a, s, s > 0.0 ? 0.5 / s : 0.0);
}
template <int N>
Dual<N> exp(const Dual<N> &a) {
    double e = std::exp(a.v);
    return detail::chain(a, e, e);
}
template <int N>
Dual<N> log(const Dual<N> &a) { return detail::chain(a, std::log(a.v), 1.0 / a.v); }
template <int N>
Dual<N> log1p(const Dual<N> &a) { return detail::chain(a, std::log1p(a.v), 1.0 / (1.0 + a.v)); }
template <int N>
Dual<N> sin(const Dual<N> &a) { return detail::chain(a, std::sin(a.v), std::cos(a.v)); }
template <int N>
Dual<N> cos(const Dual<N> &a) { return detail::chain(a, std::cos(a.v), -std::sin(a.v)); }
template <int N>
Dual<N> acos(const Dual<N> &a) {
    double s = 1.0 - a.v * a.v;
    return detail::chain(a, std::acos(a.v), s > 0.0 ? -1.0 / std::sqrt(s) : 0.0);
}
template <int N>
Dual<N> atan2(const Dual<N> &y, const Dual<N> &x) {
    Dual<N> r;
    r.v = std::atan2(y.v, x.v);
    double den = x.v * x.v + y.v * y.v;
    if (den > 0.0) {
        double inv = 1.0 / den;
        for (int i = 0; i < N; i++) r.d[i] = (x.v * y.d[i] - y.v * x.d[i]) * inv;
    }
    return r;
}

// Integer power by repeated multiplication.
template <class T>
T powi(const T &x, int n) {
    T r = T(1.0);
    for (int i = 0; i < n; i++) r = r * x;
    return r;
}

template <class T>
T max_value(const T &a, const T &b) { return value(a) >= value(b) ? a : b; }
template <class T>
T min_value(const T &a, const T &b) { return value(a) <= value(b) ? a : b; }
template <class T>
T clamp_value(const T &x, double lo, double hi) {
    if (value(x) < lo) return T(lo);
    if (value(x) > hi) return T(hi);
    return x;
}

} // namespace alp

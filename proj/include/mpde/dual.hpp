#pragma once

#include <cmath>

namespace mpde {

// First-order forward-mode dual number. Running the whole loss-and-gradient
// computation with S = Dual gives exact Hessian-vector products
// (forward-over-reverse), which is how the second-order MAML term is formed.
template <class T>
struct Dual {
    T v{};  // value
    T d{};  // directional derivative

    Dual() = default;
    Dual(T value) : v(value) {}
    Dual(T value, T deriv) : v(value), d(deriv) {}

    Dual operator-() const { return {-v, -d}; }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        d += o.d;
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        d -= o.d;
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        d = d * o.v + v * o.d;
        v *= o.v;
        return *this;
    }
    Dual& operator/=(const Dual& o) {
        d = (d * o.v - v * o.d) / (o.v * o.v);
        v /= o.v;
        return *this;
    }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
    friend Dual operator/(Dual a, const Dual& b) { return a /= b; }

    friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
    friend bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
};

template <class T>
Dual<T> sin(const Dual<T>& a) {
    using std::cos;
    using std::sin;
    return {sin(a.v), a.d * cos(a.v)};
}

template <class T>
Dual<T> cos(const Dual<T>& a) {
    using std::cos;
    using std::sin;
    return {cos(a.v), -a.d * sin(a.v)};
}

template <class T>
Dual<T> exp(const Dual<T>& a) {
    using std::exp;
    T e = exp(a.v);
    return {e, a.d * e};
}

inline bool finite_value(double x) { return std::isfinite(x); }

template <class T>
bool finite_value(const Dual<T>& x) {
    return finite_value(x.v) && finite_value(x.d);
}

inline double value_of(double x) { return x; }

template <class T>
double value_of(const Dual<T>& x) {
    return value_of(x.v);
}

}  // namespace mpde

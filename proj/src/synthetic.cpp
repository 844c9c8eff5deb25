#include "tmflow/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "tmflow/error.hpp"

namespace tmflow {

namespace {

constexpr double kPi = std::numbers::pi;

// Smooth step from 1 (r <= r0) to 0 (r >= r1).
double blend(double r, double r0, double r1) {
    if (r <= r0) return 1.0;
    if (r >= r1) return 0.0;
    const double t = (r - r0) / (r1 - r0);
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

// Map from the reciprocal coordinate q = 1/w, so that q = 0 is the north pole.
std::array<double, 3> from_reciprocal(std::complex<double> q) {
    const double n = std::norm(q);
    return {2.0 * q.real() / (1.0 + n), -2.0 * q.imag() / (1.0 + n), (1.0 - n) / (1.0 + n)};
}

double wrap_unit(double d) { return d - std::round(d); }

double wrap_angle(double d) { return d - 2.0 * kPi * std::round(d / (2.0 * kPi)); }

}  // namespace

std::array<double, 3> inverse_stereographic(std::complex<double> w) {
    const double n = std::norm(w);
    return {2.0 * w.real() / (1.0 + n), 2.0 * w.imag() / (1.0 + n), (n - 1.0) / (n + 1.0)};
}

SphereMapField make_torus_bubble(std::size_t N, double cx, double cy, double lambda, double r_inner,
                                 double r_outer) {
    if (!(lambda > 0.0) || !(r_inner < r_outer) || !(r_outer < 0.5)) throw DomainError("invalid torus bubble parameters");
    SphereMapField u(N, N, 3);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            const double dx = wrap_unit(static_cast<double>(j) / static_cast<double>(N) - cx);
            const double dy = wrap_unit(static_cast<double>(i) / static_cast<double>(N) - cy);
            const std::complex<double> z{dx, dy};
            const double r = std::abs(z);
            std::array<double, 3> v;
            if (r == 0.0) {
                v = {0.0, 0.0, -1.0};
            } else {
                const std::complex<double> q = lambda / z * blend(r, r_inner, r_outer);
                v = from_reciprocal(q);
            }
            double* n = u.node(i, j);
            for (int k = 0; k < 3; ++k) n[k] = v[k];
        }
    return u;
}

SphereMapField make_curve_with_bubbles(std::size_t ns, std::size_t ntheta, double X, double alpha0, double alpha1,
                                       const std::vector<GluedBubble>& bubbles, double r_inner, double r_outer) {
    if (ns < 2 || ntheta < 3 || !(X > 0.0)) throw DomainError("invalid cylinder grid");
    if (!(r_inner < r_outer) || !(r_outer < kPi)) throw DomainError("invalid bubble blending radii");
    SphereMapField u(ns, ntheta, 3);
    const double hs = 2.0 * X / static_cast<double>(ns - 1);
    const double ht = 2.0 * kPi / static_cast<double>(ntheta);
    for (std::size_t i = 0; i < ns; ++i) {
        const double s = -X + hs * static_cast<double>(i);
        const double a = alpha0 + (alpha1 - alpha0) * (s + X) / (2.0 * X);
        const double ca = std::cos(a), sa = std::sin(a);
        for (std::size_t j = 0; j < ntheta; ++j) {
            const double th = ht * static_cast<double>(j);
            std::complex<double> q{0.0, 0.0};
            bool at_pole = false;
            for (const auto& b : bubbles) {
                const std::complex<double> z{s - b.s, wrap_angle(th - b.theta)};
                const double r = std::abs(z);
                if (r == 0.0) {
                    at_pole = true;
                    continue;
                }
                q += b.lambda / z * blend(r, r_inner, r_outer);
            }
            std::array<double, 3> v = at_pole ? std::array<double, 3>{0.0, 0.0, -1.0} : from_reciprocal(q);
            // rotate about the y axis by a: north pole -> (sin a, 0, cos a)
            double* n = u.node(i, j);
            n[0] = ca * v[0] + sa * v[2];
            n[1] = v[1];
            n[2] = -sa * v[0] + ca * v[2];
        }
    }
    return u;
}

SphereMapField make_neck_bubble(std::size_t ns, std::size_t ntheta, double X, double s0) {
    if (ns < 2 || ntheta < 3 || !(X > 0.0)) throw DomainError("invalid cylinder grid");
    SphereMapField u(ns, ntheta, 3);
    const double hs = 2.0 * X / static_cast<double>(ns - 1);
    const double ht = 2.0 * kPi / static_cast<double>(ntheta);
    for (std::size_t i = 0; i < ns; ++i) {
        const double s = -X + hs * static_cast<double>(i);
        for (std::size_t j = 0; j < ntheta; ++j) {
            const double th = ht * static_cast<double>(j);
            // written in terms of s to stay accurate for large |s|
            const double sech = 1.0 / std::cosh(s - s0);
            const double th_ = std::tanh(s - s0);
            double* n = u.node(i, j);
            n[0] = sech * std::cos(th);
            n[1] = sech * std::sin(th);
            n[2] = th_;
        }
    }
    return u;
}

}  // namespace tmflow

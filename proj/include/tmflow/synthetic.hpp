#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

#include "tmflow/grid.hpp"

namespace tmflow {

// Inverse stereographic projection from the south pole: 0 maps to (0,0,-1),
// infinity to (0,0,1).
std::array<double, 3> inverse_stereographic(std::complex<double> w);

// Degree-1 bubble of scale lambda centred at (cx, cy) on the unit square
// torus (x along columns). The bubble is exact inside coordinate radius
// r_inner and blends smoothly into the north pole by r_outer (< 1/2).
SphereMapField make_torus_bubble(std::size_t N, double cx, double cy, double lambda, double r_inner = 0.3,
                                 double r_outer = 0.45);

struct GluedBubble {
    double s = 0.0;
    double theta = 0.0;
    double lambda = 0.1;
};

// theta-independent curve s -> (sin a(s), 0, cos a(s)) with a linear from
// alpha0 to alpha1 over [-X, X], with optional bubbles glued in at the given
// points. Each bubble is exact within radius r_inner of its centre and is
// blended out by r_outer (< pi).
SphereMapField make_curve_with_bubbles(std::size_t ns, std::size_t ntheta, double X, double alpha0, double alpha1,
                                       const std::vector<GluedBubble>& bubbles, double r_inner = 1.8,
                                       double r_outer = 3.0);

// theta-wrapping neck bubble (s, theta) -> inverse stereographic of e^{s - s0 + i theta}.
SphereMapField make_neck_bubble(std::size_t ns, std::size_t ntheta, double X, double s0);

}  // namespace tmflow

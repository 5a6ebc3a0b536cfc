#pragma once

#include <vector>

#include "mfgtorus/common.hpp"

namespace mfg {

// Point on the flat torus [0,1)^d. Coordinates are always stored as the
// canonical representative in [0,1).
struct TorusPoint {
    Vec coords;

    std::size_t dim() const { return coords.size(); }
    double operator[](std::size_t i) const { return coords[i]; }
};

// Minimal displacement between two torus points; every component lies in
// [-1/2, 1/2). Ties at exactly 1/2 resolve to -1/2.
struct TorusVector {
    Vec components;

    std::size_t dim() const { return components.size(); }
    double operator[](std::size_t i) const { return components[i]; }
    double norm() const { return norm2(components); }
};

// Canonicalize an arbitrary real vector modulo 1 into [0,1)^d.
TorusPoint wrap(const Vec& v);

// Reduce a single real to [0,1).
double wrap_coord(double c);

// Minimal representative of y - x, componentwise in [-1/2, 1/2).
// wrap(x + min_displacement(x,y)) == y up to roundoff.
TorusVector min_displacement(const TorusPoint& x, const TorusPoint& y);

// Geodesic distance on the torus: Euclidean norm of the minimal displacement.
double torus_dist(const TorusPoint& x, const TorusPoint& y);

}  // namespace mfg

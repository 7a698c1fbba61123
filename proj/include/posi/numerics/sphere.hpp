#pragma once

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "posi/error.hpp"
#include "posi/numerics/rng.hpp"

namespace posi::numerics {

/// Fills `out` with a point uniform on the unit sphere of R^out.size():
/// normalized independent standard normals, redrawn on the all-zero event.
inline void sample_unit_sphere(std::span<double> out, RngStream& stream) {
    if (out.empty()) throw ValidationError("sample_unit_sphere: dimension must be >= 1");
    for (;;) {
        double norm2 = 0.0;
        for (double& v : out) {
            v = stream.normal();
            norm2 += v * v;
        }
        if (norm2 > 0.0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (double& v : out) v *= inv;
            return;
        }
    }
}

inline Eigen::VectorXd sample_unit_sphere(int d, RngStream& stream) {
    if (d < 1) throw ValidationError("sample_unit_sphere: dimension must be >= 1");
    Eigen::VectorXd v(d);
    sample_unit_sphere(std::span<double>(v.data(), static_cast<std::size_t>(d)), stream);
    return v;
}

}  // namespace posi::numerics

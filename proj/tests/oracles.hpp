#pragma once

// Independent brute-force oracles used by unit tests and the acceptance
// suite. Nothing here touches the implementation path it checks.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "tba/metrics.hpp"
#include "tba/rng.hpp"

namespace tba::test {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 axis_rotation(int axis, double angle_rad) {
    double c = std::cos(angle_rad), s = std::sin(angle_rad);
    switch (axis) {
        case 0: return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
        case 1: return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
        default: return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    }
}

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 out{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < 3; ++k) out[r][c] += a[r][k] * b[k][c];
    return out;
}

inline Point3 mat_apply(const Mat3& m, const Point3& p) {
    return {m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2]};
}

// Squared residual of the best translation for a fixed rotation and scale:
// t = mean(gt) - s*R*mean(pred).
inline double residual_for(const Mat3& R, double s, const PointCloud& pred, const PointCloud& gt) {
    const std::size_t n = pred.size();
    Point3 mp{0, 0, 0}, mg{0, 0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (int r = 0; r < 3; ++r) {
            mp[r] += pred[i][r];
            mg[r] += gt[i][r];
        }
    for (int r = 0; r < 3; ++r) {
        mp[r] /= static_cast<double>(n);
        mg[r] /= static_cast<double>(n);
    }
    Point3 smp = mat_apply(R, mp);
    Point3 t{mg[0] - s * smp[0], mg[1] - s * smp[1], mg[2] - s * smp[2]};
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Point3 rp = mat_apply(R, pred[i]);
        for (int r = 0; r < 3; ++r) {
            double d = s * rp[r] + t[r] - gt[i][r];
            acc += d * d;
        }
    }
    return acc;
}

// Minimum residual over 1-degree rotations about each single axis plus a
// coarse three-axis Euler product, crossed with scales 0.5..2.0 step 0.05.
inline double grid_search_residual(const PointCloud& pred, const PointCloud& gt,
                                   int coarse_step_deg = 30) {
    constexpr double deg = std::numbers::pi / 180.0;
    std::vector<double> scales;
    for (double s = 0.5; s <= 2.0 + 1e-12; s += 0.05) scales.push_back(s);
    double best = std::numeric_limits<double>::infinity();
    for (int axis = 0; axis < 3; ++axis)
        for (int a = 0; a < 360; ++a) {
            Mat3 R = axis_rotation(axis, a * deg);
            for (double s : scales) best = std::min(best, residual_for(R, s, pred, gt));
        }
    for (int ax = 0; ax < 360; ax += coarse_step_deg)
        for (int ay = 0; ay < 360; ay += coarse_step_deg)
            for (int az = 0; az < 360; az += coarse_step_deg) {
                Mat3 R = mat_mul(axis_rotation(2, az * deg),
                                 mat_mul(axis_rotation(1, ay * deg), axis_rotation(0, ax * deg)));
                for (double s : scales) best = std::min(best, residual_for(R, s, pred, gt));
            }
    return best;
}

inline double closed_form_residual(const PointCloud& pred, const PointCloud& gt) {
    auto res = procrustes_align(pred, gt);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (int r = 0; r < 3; ++r) {
            double d = res.aligned[i][r] - gt[i][r];
            acc += d * d;
        }
    return acc;
}

inline PointCloud random_cloud(Rng& rng, std::size_t n, double spread = 1.0) {
    PointCloud cloud(n);
    for (auto& p : cloud)
        for (int r = 0; r < 3; ++r) p[r] = rng.uniform(-spread, spread);
    return cloud;
}

}  // namespace tba::test

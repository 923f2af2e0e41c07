#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tba/metrics.hpp"
#include "tba/rng.hpp"
#include "tba/tensor.hpp"

namespace tba {

enum class SkeletonProfile { Small, Full };  // 22 body joints / 53 with hands and jaw

enum class Region : std::uint8_t { Body, LeftHand, RightHand, Face };

// Pose (axis-angle per joint), shape and expression coefficients.
struct PoseParams {
    std::vector<std::array<double, 3>> delta;  // J x 3, |entry| <= pi
    std::array<double, 10> rho{};
    std::array<double, 10> phi{};

    static PoseParams zeros(int joint_count);
    // Validates joint count, finiteness and the canonical axis-angle range.
    void validate(int joint_count) const;
    std::vector<double> flatten() const;  // delta row-major, then rho, then phi
    static PoseParams unflatten(int joint_count, const std::vector<double>& v);
};

// Kinematic tree plus fixed seeded blend matrices. Bone j scales by
// (1 + B[j] . rho); face landmarks offset by E[f] . phi in the jaw frame.
struct Skeleton {
    SkeletonProfile profile = SkeletonProfile::Small;
    std::vector<int> parent;                         // parent[0] == -1
    std::vector<std::array<double, 3>> rest_offset;  // model units
    std::vector<Region> joint_region;
    std::vector<std::array<double, 10>> blend_shape;            // J x 10
    std::vector<std::array<std::array<double, 10>, 3>> blend_expr;  // F x 3 x 10
    std::vector<std::array<double, 3>> face_rest;    // F x 3, jaw-local
    double mm_per_unit = 1000.0;

    int joint_count() const { return static_cast<int>(parent.size()); }
    int face_landmark_count() const { return static_cast<int>(face_rest.size()); }
    int vertex_count() const { return 2 * joint_count() - 1 + face_landmark_count(); }

    std::string to_json() const;
    static Skeleton from_json(const std::string& text);
};

// Standard skeletons: 22 body joints (small) or the 22/15/15/1 partition
// (full), with blend matrices drawn once from the given seed.
Skeleton make_skeleton(SkeletonProfile profile, std::uint64_t blend_seed = 7);

struct BodyGeometry {
    PointCloud joints;    // J x 3, model units
    PointCloud vertices;  // joints ++ bone midpoints ++ face landmarks
    std::vector<Region> joint_region;
    std::vector<Region> vertex_region;
};

BodyGeometry forward_model(const Skeleton& skeleton, const PoseParams& params);

// G * vertices with G the fixed selector regressor; layout must match.
PointCloud joint_regressor(const Skeleton& skeleton, const PointCloud& vertices);
// Dense J x V regressor matrix (row-major), for cross-checks and export.
std::vector<double> regressor_matrix(const Skeleton& skeleton);

// Per-dimension uniform sampling boxes.
struct PoseLimits {
    std::vector<std::array<std::array<double, 2>, 3>> delta;  // J x 3 x {lo,hi}
    std::array<double, 2> rho{-1.0, 1.0};
    std::array<double, 2> phi{-1.0, 1.0};
};

// Anatomically one-sided boxes (knees/elbows bend one way) so the dataset
// mean pose differs from the rest pose.
PoseLimits default_limits(const Skeleton& skeleton);
PoseParams sample_pose(Rng& rng, const PoseLimits& limits);

// Conversion to millimeters for the metric suite.
PointCloud to_mm(const Skeleton& skeleton, const PointCloud& points);
// Region index sets over (joints, vertices); Small profile only has
// All/Body, Full adds Hands and Face.
std::map<BodyRegion, RegionIndex> region_indices(const Skeleton& skeleton);

}  // namespace tba

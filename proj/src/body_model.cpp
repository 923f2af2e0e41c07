#include "tba/body_model.hpp"

#include <cmath>
#include <json.hpp>
#include <stdexcept>

namespace tba {

using Mat3 = std::array<std::array<double, 3>, 3>;
namespace {

constexpr double kPi = 3.14159265358979323846;

Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 out{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < 3; ++k) out[r][c] += a[r][k] * b[k][c];
    return out;
}

Point3 mat_apply(const Mat3& m, const Point3& p) {
    return {m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2]};
}

Mat3 rodrigues(const std::array<double, 3>& v) {
    double theta = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (theta < 1e-12) return identity3();
    double kx = v[0] / theta, ky = v[1] / theta, kz = v[2] / theta;
    double c = std::cos(theta), s = std::sin(theta), t = 1.0 - c;
    return {{{c + kx * kx * t, kx * ky * t - kz * s, kx * kz * t + ky * s},
             {ky * kx * t + kz * s, c + ky * ky * t, ky * kz * t - kx * s},
             {kz * kx * t - ky * s, kz * ky * t + kx * s, c + kz * kz * t}}};
}

}  // namespace

PoseParams PoseParams::zeros(int joint_count) {
    PoseParams p;
    p.delta.assign(joint_count, {0.0, 0.0, 0.0});
    return p;
}

void PoseParams::validate(int joint_count) const {
    if (static_cast<int>(delta.size()) != joint_count)
        throw std::invalid_argument("PoseParams: " + std::to_string(delta.size()) +
                                    " pose rows for a skeleton with " + std::to_string(joint_count) +
                                    " joints");
    for (const auto& row : delta)
        for (double v : row) {
            if (!std::isfinite(v)) throw std::invalid_argument("PoseParams: non-finite pose entry");
            if (std::fabs(v) > kPi + 1e-12)
                throw std::invalid_argument("PoseParams: axis-angle entry outside [-pi, pi]");
        }
    for (double v : rho)
        if (!std::isfinite(v)) throw std::invalid_argument("PoseParams: non-finite shape entry");
    for (double v : phi)
        if (!std::isfinite(v)) throw std::invalid_argument("PoseParams: non-finite expression entry");
}

std::vector<double> PoseParams::flatten() const {
    std::vector<double> out;
    out.reserve(delta.size() * 3 + 20);
    for (const auto& row : delta) out.insert(out.end(), row.begin(), row.end());
    out.insert(out.end(), rho.begin(), rho.end());
    out.insert(out.end(), phi.begin(), phi.end());
    return out;
}

PoseParams PoseParams::unflatten(int joint_count, const std::vector<double>& v) {
    if (v.size() != static_cast<std::size_t>(joint_count) * 3 + 20)
        throw std::invalid_argument("PoseParams::unflatten: bad length " + std::to_string(v.size()));
    PoseParams p;
    p.delta.resize(joint_count);
    for (int j = 0; j < joint_count; ++j)
        p.delta[j] = {v[j * 3], v[j * 3 + 1], v[j * 3 + 2]};
    std::size_t base = static_cast<std::size_t>(joint_count) * 3;
    for (int i = 0; i < 10; ++i) p.rho[i] = v[base + i];
    for (int i = 0; i < 10; ++i) p.phi[i] = v[base + 10 + i];
    return p;
}

namespace {

struct JointSpec {
    int parent;
    std::array<double, 3> offset;
    Region region;
};

std::vector<JointSpec> body_joints() {
    return {
        {-1, {0.00, 0.00, 0.00}, Region::Body},   // 0 pelvis
        {0, {0.00, 0.15, 0.00}, Region::Body},    // 1 spine1
        {1, {0.00, 0.15, 0.00}, Region::Body},    // 2 spine2
        {2, {0.00, 0.15, 0.00}, Region::Body},    // 3 chest
        {3, {0.00, 0.12, 0.00}, Region::Body},    // 4 neck
        {4, {0.00, 0.14, 0.00}, Region::Body},    // 5 head
        {0, {0.09, -0.05, 0.00}, Region::Body},   // 6 l_hip
        {6, {0.00, -0.40, 0.00}, Region::Body},   // 7 l_knee
        {7, {0.00, -0.42, 0.00}, Region::Body},   // 8 l_ankle
        {8, {0.00, -0.06, 0.10}, Region::Body},   // 9 l_foot
        {0, {-0.09, -0.05, 0.00}, Region::Body},  // 10 r_hip
        {10, {0.00, -0.40, 0.00}, Region::Body},  // 11 r_knee
        {11, {0.00, -0.42, 0.00}, Region::Body},  // 12 r_ankle
        {12, {0.00, -0.06, 0.10}, Region::Body},  // 13 r_foot
        {3, {0.08, 0.08, 0.00}, Region::Body},    // 14 l_clavicle
        {14, {0.10, 0.00, 0.00}, Region::Body},   // 15 l_shoulder
        {15, {0.26, 0.00, 0.00}, Region::Body},   // 16 l_elbow
        {16, {0.25, 0.00, 0.00}, Region::Body},   // 17 l_wrist
        {3, {-0.08, 0.08, 0.00}, Region::Body},   // 18 r_clavicle
        {18, {-0.10, 0.00, 0.00}, Region::Body},  // 19 r_shoulder
        {19, {-0.26, 0.00, 0.00}, Region::Body},  // 20 r_elbow
        {20, {-0.25, 0.00, 0.00}, Region::Body},  // 21 r_wrist
    };
}

void append_hand(std::vector<JointSpec>& joints, int wrist, double dir, Region region) {
    for (int finger = 0; finger < 5; ++finger) {
        double z = (finger - 2) * 0.015;
        int base = static_cast<int>(joints.size());
        joints.push_back({wrist, {dir * 0.040, 0.0, z}, region});
        joints.push_back({base, {dir * 0.030, 0.0, 0.0}, region});
        joints.push_back({base + 1, {dir * 0.025, 0.0, 0.0}, region});
    }
}

}  // namespace

Skeleton make_skeleton(SkeletonProfile profile, std::uint64_t blend_seed) {
    std::vector<JointSpec> joints = body_joints();
    std::vector<std::array<double, 3>> face_rest;
    if (profile == SkeletonProfile::Full) {
        append_hand(joints, 17, 1.0, Region::LeftHand);
        append_hand(joints, 21, -1.0, Region::RightHand);
        joints.push_back({5, {0.00, 0.02, 0.05}, Region::Face});  // jaw
        face_rest = {{0.000, 0.040, 0.060},  {0.030, 0.030, 0.055},  {-0.030, 0.030, 0.055},
                     {0.045, 0.000, 0.050},  {-0.045, 0.000, 0.050}, {0.020, -0.030, 0.055},
                     {-0.020, -0.030, 0.055}, {0.000, -0.010, 0.070}};
    }

    Skeleton sk;
    sk.profile = profile;
    for (const JointSpec& j : joints) {
        sk.parent.push_back(j.parent);
        sk.rest_offset.push_back(j.offset);
        sk.joint_region.push_back(j.region);
    }
    sk.face_rest = face_rest;

    Rng rng(blend_seed);
    Rng shape_rng = rng.fork("blend_shape");
    Rng expr_rng = rng.fork("blend_expr");
    sk.blend_shape.resize(sk.parent.size());
    for (std::size_t j = 0; j < sk.blend_shape.size(); ++j)
        for (int i = 0; i < 10; ++i)
            sk.blend_shape[j][i] = j == 0 ? 0.0 : shape_rng.uniform(-0.05, 0.05);
    sk.blend_expr.resize(face_rest.size());
    for (auto& landmark : sk.blend_expr)
        for (auto& row : landmark)
            for (double& v : row) v = expr_rng.uniform(-0.02, 0.02);
    return sk;
}

BodyGeometry forward_model(const Skeleton& skeleton, const PoseParams& params) {
    const int J = skeleton.joint_count();
    params.validate(J);

    std::vector<double> bone_scale(J);
    for (int j = 0; j < J; ++j) {
        double s = 1.0;
        for (int i = 0; i < 10; ++i) s += skeleton.blend_shape[j][i] * params.rho[i];
        bone_scale[j] = s;
    }

    std::vector<Mat3> global_rot(J);
    BodyGeometry geo;
    geo.joints.resize(J);
    for (int j = 0; j < J; ++j) {
        Mat3 local = rodrigues(params.delta[j]);
        int p = skeleton.parent[j];
        if (p < 0) {
            geo.joints[j] = {bone_scale[j] * skeleton.rest_offset[j][0],
                             bone_scale[j] * skeleton.rest_offset[j][1],
                             bone_scale[j] * skeleton.rest_offset[j][2]};
            global_rot[j] = local;
        } else {
            Point3 bone = {bone_scale[j] * skeleton.rest_offset[j][0],
                           bone_scale[j] * skeleton.rest_offset[j][1],
                           bone_scale[j] * skeleton.rest_offset[j][2]};
            Point3 moved = mat_apply(global_rot[p], bone);
            geo.joints[j] = {geo.joints[p][0] + moved[0], geo.joints[p][1] + moved[1],
                             geo.joints[p][2] + moved[2]};
            global_rot[j] = mat_mul(global_rot[p], local);
        }
    }
    geo.joint_region = skeleton.joint_region;

    geo.vertices = geo.joints;
    geo.vertex_region = geo.joint_region;
    for (int j = 1; j < J; ++j) {
        int p = skeleton.parent[j];
        geo.vertices.push_back({0.5 * (geo.joints[j][0] + geo.joints[p][0]),
                                0.5 * (geo.joints[j][1] + geo.joints[p][1]),
                                0.5 * (geo.joints[j][2] + geo.joints[p][2])});
        geo.vertex_region.push_back(skeleton.joint_region[j]);
    }
    const int F = skeleton.face_landmark_count();
    if (F > 0) {
        const int jaw = J - 1;
        for (int f = 0; f < F; ++f) {
            Point3 local = skeleton.face_rest[f];
            for (int r = 0; r < 3; ++r)
                for (int i = 0; i < 10; ++i) local[r] += skeleton.blend_expr[f][r][i] * params.phi[i];
            Point3 moved = mat_apply(global_rot[jaw], local);
            geo.vertices.push_back({geo.joints[jaw][0] + moved[0], geo.joints[jaw][1] + moved[1],
                                    geo.joints[jaw][2] + moved[2]});
            geo.vertex_region.push_back(Region::Face);
        }
    }
    return geo;
}

std::vector<double> regressor_matrix(const Skeleton& skeleton) {
    const int J = skeleton.joint_count();
    const int V = skeleton.vertex_count();
    std::vector<double> g(static_cast<std::size_t>(J) * V, 0.0);
    for (int j = 0; j < J; ++j) g[static_cast<std::size_t>(j) * V + j] = 1.0;
    return g;
}

PointCloud joint_regressor(const Skeleton& skeleton, const PointCloud& vertices) {
    const int J = skeleton.joint_count();
    const int V = skeleton.vertex_count();
    if (static_cast<int>(vertices.size()) != V)
        throw std::invalid_argument("joint_regressor: vertex layout has " +
                                    std::to_string(vertices.size()) + " rows, regressor expects " +
                                    std::to_string(V));
    Tensor g = Tensor::from_data({J, V}, regressor_matrix(skeleton));
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(V) * 3);
    for (const auto& p : vertices) flat.insert(flat.end(), p.begin(), p.end());
    Tensor vm = Tensor::from_data({V, 3}, std::move(flat));
    Tensor out = matmul(g, vm);
    PointCloud joints(J);
    for (int j = 0; j < J; ++j)
        joints[j] = {out.at(static_cast<std::size_t>(j) * 3), out.at(static_cast<std::size_t>(j) * 3 + 1),
                     out.at(static_cast<std::size_t>(j) * 3 + 2)};
    return joints;
}

PoseLimits default_limits(const Skeleton& skeleton) {
    const int J = skeleton.joint_count();
    PoseLimits lim;
    // Stylized ranges: the large articulations rotate about z so they stay
    // in the default camera plane, and hinge joints are one-sided, which
    // keeps poses visible in the renders and the dataset mean away from the
    // rest pose.
    lim.delta.assign(J, {{{-0.08, 0.08}, {-0.08, 0.08}, {-0.2, 0.2}}});
    auto set = [&](int j, double xlo, double xhi, double ylo, double yhi, double zlo, double zhi) {
        lim.delta[j] = {{{xlo, xhi}, {ylo, yhi}, {zlo, zhi}}};
    };
    set(0, -0.08, 0.08, -0.08, 0.08, -0.35, 0.35);  // pelvis orientation
    for (int j : {1, 2, 3}) set(j, -0.05, 0.05, -0.05, 0.05, -0.3, 0.3);
    for (int j : {4, 5}) set(j, -0.05, 0.05, -0.05, 0.05, -0.35, 0.35);
    set(6, -0.1, 0.1, -0.05, 0.05, -0.9, 0.15);   // l_hip swings outward
    set(10, -0.1, 0.1, -0.05, 0.05, -0.15, 0.9);  // r_hip mirrored
    set(7, -0.05, 0.05, -0.05, 0.05, 0.0, 1.3);   // knees bend one way
    set(11, -0.05, 0.05, -0.05, 0.05, -1.3, 0.0);
    for (int j : {8, 12}) set(j, -0.08, 0.08, -0.08, 0.08, -0.4, 0.4);
    for (int j : {9, 13}) set(j, -0.08, 0.08, -0.08, 0.08, -0.15, 0.15);
    for (int j : {14, 18}) set(j, -0.05, 0.05, -0.05, 0.05, -0.15, 0.15);
    set(15, -0.15, 0.15, -0.15, 0.15, -1.2, 0.4);  // l_shoulder
    set(19, -0.15, 0.15, -0.15, 0.15, -0.4, 1.2);  // r_shoulder
    set(16, -0.05, 0.05, -0.05, 0.05, 0.0, 1.8);   // l_elbow
    set(20, -0.05, 0.05, -0.05, 0.05, -1.8, 0.0);  // r_elbow
    for (int j : {17, 21}) set(j, -0.15, 0.15, -0.15, 0.15, -0.3, 0.3);
    if (skeleton.profile == SkeletonProfile::Full) {
        for (int j = 22; j < 37; ++j) set(j, -0.15, 0.15, -0.15, 0.15, 0.0, 1.2);   // left fingers curl
        for (int j = 37; j < 52; ++j) set(j, -0.15, 0.15, -0.15, 0.15, -1.2, 0.0);  // right fingers curl
        set(52, 0.0, 0.3, -0.05, 0.05, -0.05, 0.05);                                // jaw opens
    }
    lim.rho = {-1.0, 1.0};
    lim.phi = {-1.0, 1.0};
    return lim;
}

PoseParams sample_pose(Rng& rng, const PoseLimits& limits) {
    PoseParams p;
    p.delta.resize(limits.delta.size());
    for (std::size_t j = 0; j < limits.delta.size(); ++j)
        for (int a = 0; a < 3; ++a)
            p.delta[j][a] = rng.uniform(limits.delta[j][a][0], limits.delta[j][a][1]);
    for (double& v : p.rho) v = rng.uniform(limits.rho[0], limits.rho[1]);
    for (double& v : p.phi) v = rng.uniform(limits.phi[0], limits.phi[1]);
    return p;
}

PointCloud to_mm(const Skeleton& skeleton, const PointCloud& points) {
    PointCloud out = points;
    for (auto& p : out)
        for (double& v : p) v *= skeleton.mm_per_unit;
    return out;
}

std::map<BodyRegion, RegionIndex> region_indices(const Skeleton& skeleton) {
    const int J = skeleton.joint_count();
    const int V = skeleton.vertex_count();
    PoseParams rest = PoseParams::zeros(J);
    BodyGeometry geo = forward_model(skeleton, rest);

    std::map<BodyRegion, RegionIndex> out;
    auto& all = out[BodyRegion::All];
    for (int j = 0; j < J; ++j) all.joints.push_back(j);
    for (int v = 0; v < V; ++v) all.vertices.push_back(v);

    auto bucket = [](Region r) {
        switch (r) {
            case Region::Body: return BodyRegion::Body;
            case Region::LeftHand:
            case Region::RightHand: return BodyRegion::Hands;
            case Region::Face: return BodyRegion::Face;
        }
        return BodyRegion::Body;
    };
    std::map<BodyRegion, RegionIndex> partial;
    for (int j = 0; j < J; ++j) partial[bucket(geo.joint_region[j])].joints.push_back(j);
    for (int v = 0; v < V; ++v) partial[bucket(geo.vertex_region[v])].vertices.push_back(v);
    for (auto& [region, idx] : partial)
        if (!idx.joints.empty()) out[region] = std::move(idx);
    return out;
}

// ---- serialization ----

std::string Skeleton::to_json() const {
    nlohmann::json j;
    j["profile"] = profile == SkeletonProfile::Full ? "full" : "small";
    j["mm_per_unit"] = mm_per_unit;
    j["parent"] = parent;
    j["rest_offset"] = rest_offset;
    nlohmann::json regions = nlohmann::json::array();
    for (Region r : joint_region) regions.push_back(static_cast<int>(r));
    j["joint_region"] = regions;
    j["blend_shape"] = blend_shape;
    j["blend_expr"] = blend_expr;
    j["face_rest"] = face_rest;
    return j.dump(2);
}

Skeleton Skeleton::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Skeleton sk;
    sk.profile = j.at("profile") == "full" ? SkeletonProfile::Full : SkeletonProfile::Small;
    sk.mm_per_unit = j.at("mm_per_unit");
    sk.parent = j.at("parent").get<std::vector<int>>();
    sk.rest_offset = j.at("rest_offset").get<std::vector<std::array<double, 3>>>();
    for (int r : j.at("joint_region").get<std::vector<int>>())
        sk.joint_region.push_back(static_cast<Region>(r));
    sk.blend_shape = j.at("blend_shape").get<std::vector<std::array<double, 10>>>();
    sk.blend_expr = j.at("blend_expr").get<std::vector<std::array<std::array<double, 10>, 3>>>();
    sk.face_rest = j.at("face_rest").get<std::vector<std::array<double, 3>>>();

    int root_count = 0;
    for (int p : sk.parent) root_count += p < 0;
    if (root_count != 1 || sk.parent.empty() || sk.parent[0] != -1)
        throw std::invalid_argument("Skeleton::from_json: parent array is not a rooted tree");
    for (std::size_t i = 1; i < sk.parent.size(); ++i)
        if (sk.parent[i] < 0 || static_cast<std::size_t>(sk.parent[i]) >= i)
            throw std::invalid_argument("Skeleton::from_json: parents must precede children");
    return sk;
}

}  // namespace tba

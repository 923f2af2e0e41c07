#include "tba/imaging.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "tba/io.hpp"

namespace tba {

Image Image::zeros(int height, int width, int channels) {
    Image img;
    img.height = height;
    img.width = width;
    img.channels = channels;
    img.pixels.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
    return img;
}

Tensor Image::as_tensor(bool requires_grad) const {
    return Tensor::from_data({channels, height, width}, pixels, requires_grad);
}

Image Image::from_tensor(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.size() != 3) throw ShapeError("Image::from_tensor: expected [C,H,W], got " + shape_str(s));
    Image img;
    img.channels = s[0];
    img.height = s[1];
    img.width = s[2];
    img.pixels.assign(t.values().begin(), t.values().end());
    img.validate();
    return img;
}

void Image::validate() const {
    if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
        throw ShapeError("Image: pixel buffer does not match dimensions");
    for (double p : pixels)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("Image: pixel outside [0,1]");
}

namespace {

void project(const Camera& cam, const Point3& p, double& u, double& v) {
    double a, b;
    switch (cam.drop_axis) {
        case 0: a = p[1]; b = p[2]; break;
        case 1: a = p[0]; b = p[2]; break;
        default: a = p[0]; b = p[1]; break;
    }
    u = cam.cx + cam.scale * a;
    v = cam.cy - cam.scale * b;
}

double dist_to_segment(double px, double py, double u0, double v0, double u1, double v1) {
    double dx = u1 - u0, dy = v1 - v0;
    double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((px - u0) * dx + (py - v0) * dy) / len2;
        if (t < 0.0) t = 0.0;
        if (t > 1.0) t = 1.0;
    }
    double qx = u0 + t * dx, qy = v0 + t * dy;
    double ex = px - qx, ey = py - qy;
    return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Image render(const BodyGeometry& geometry, const Camera& camera, const RenderSpec& spec) {
    if (!(camera.scale > 0.0)) throw std::invalid_argument("render: camera scale must be positive");
    Image img = Image::zeros(spec.height, spec.width);
    const double inv2s2 = 1.0 / (2.0 * spec.sigma_px * spec.sigma_px);

    // joints[0] is the root; every other joint spans a bone to its parent,
    // recovered from the midpoint vertex layout (vertex J+k-1 is the midpoint
    // of bone k, i.e. 2*mid - joint = parent position).
    const std::size_t joint_count = geometry.joints.size();
    for (std::size_t j = 1; j < joint_count; ++j) {
        const Point3& child = geometry.joints[j];
        const Point3& mid = geometry.vertices[joint_count + j - 1];
        Point3 parent = {2 * mid[0] - child[0], 2 * mid[1] - child[1], 2 * mid[2] - child[2]};
        double u0, v0, u1, v1;
        project(camera, parent, u0, v0);
        project(camera, child, u1, v1);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                double d = dist_to_segment(static_cast<double>(x), static_cast<double>(y), u0, v0, u1, v1);
                img.pixels[static_cast<std::size_t>(y) * spec.width + x] += std::exp(-d * d * inv2s2);
            }
    }
    for (double& p : img.pixels)
        if (p > 1.0) p = 1.0;
    return img;
}

std::vector<Sample> make_dataset(const Skeleton& skeleton, const PoseLimits& limits,
                                 const Camera& camera, const RenderSpec& spec, const Rng& rng,
                                 int count) {
    if (count < 1) throw std::invalid_argument("make_dataset: count must be >= 1");
    std::vector<Sample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng item_rng = rng.fork("sample/" + std::to_string(i));
        Sample s;
        s.params = sample_pose(item_rng, limits);
        s.geometry = forward_model(skeleton, s.params);
        s.image = render(s.geometry, camera, spec);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

std::vector<double> flatten_points(const PointCloud& pts) {
    std::vector<double> flat;
    flat.reserve(pts.size() * 3);
    for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
    return flat;
}

PointCloud unflatten_points(const std::vector<double>& flat) {
    if (flat.size() % 3 != 0) throw std::runtime_error("dataset blob is not an Nx3 point set");
    PointCloud pts(flat.size() / 3);
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
    return pts;
}

std::string item_name(int i, const char* what) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "item_%05d_%s.f64", i, what);
    return buf;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& dataset,
                  const Skeleton& skeleton) {
    std::filesystem::create_directories(dir);
    io::write_text(dir / "skeleton.json", skeleton.to_json());

    nlohmann::json index;
    index["count"] = dataset.size();
    index["profile"] = skeleton.profile == SkeletonProfile::Full ? "full" : "small";
    if (!dataset.empty()) {
        index["image"] = {{"height", dataset[0].image.height},
                          {"width", dataset[0].image.width},
                          {"channels", dataset[0].image.channels}};
    }
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset[i];
        nlohmann::json item;
        struct Entry {
            const char* key;
            std::string file;
            std::vector<double> data;
        };
        std::vector<Entry> entries;
        entries.push_back({"image", item_name(static_cast<int>(i), "image"), s.image.pixels});
        entries.push_back({"params", item_name(static_cast<int>(i), "params"), s.params.flatten()});
        entries.push_back({"joints", item_name(static_cast<int>(i), "joints"), flatten_points(s.geometry.joints)});
        entries.push_back(
            {"vertices", item_name(static_cast<int>(i), "vertices"), flatten_points(s.geometry.vertices)});
        for (const Entry& e : entries) {
            io::write_blob(dir / e.file, e.data);
            item[e.key] = {{"path", e.file}, {"hash", io::file_hash(dir / e.file)}};
        }
        items.push_back(item);
    }
    index["items"] = items;
    io::write_text(dir / "index.json", index.dump(2));
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, const Skeleton& skeleton) {
    nlohmann::json index = nlohmann::json::parse(io::read_text(dir / "index.json"));
    std::vector<Sample> out;
    const int height = index.at("image").at("height");
    const int width = index.at("image").at("width");
    const int channels = index.at("image").at("channels");
    for (const auto& item : index.at("items")) {
        auto load = [&](const char* key) {
            const auto& entry = item.at(key);
            std::filesystem::path p = dir / entry.at("path").get<std::string>();
            io::verify_hash(p, entry.at("hash").get<std::string>());
            return io::read_blob(p);
        };
        Sample s;
        s.image.height = height;
        s.image.width = width;
        s.image.channels = channels;
        s.image.pixels = load("image");
        s.image.validate();
        s.params = PoseParams::unflatten(skeleton.joint_count(), load("params"));
        s.geometry.joints = unflatten_points(load("joints"));
        s.geometry.vertices = unflatten_points(load("vertices"));
        s.geometry.joint_region = skeleton.joint_region;
        BodyGeometry layout = forward_model(skeleton, PoseParams::zeros(skeleton.joint_count()));
        s.geometry.vertex_region = layout.vertex_region;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace tba

#pragma once

#include <filesystem>
#include <vector>

#include "tba/body_model.hpp"
#include "tba/tensor.hpp"

namespace tba {

// Grayscale image with pixels in [0,1], row-major.
struct Image {
    int height = 64;
    int width = 64;
    int channels = 1;
    std::vector<double> pixels;

    static Image zeros(int height, int width, int channels = 1);
    double at(int y, int x, int c = 0) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t size() const { return pixels.size(); }
    // [C,H,W] leaf tensor
    Tensor as_tensor(bool requires_grad = false) const;
    // Validates range and dimensions.
    static Image from_tensor(const Tensor& t);
    void validate() const;
};

// Orthographic projection: drop one world axis, scale the remaining two to
// pixels, offset by the image-space center of the world origin.
struct Camera {
    int drop_axis = 2;  // view direction
    double scale = 28.0;
    double cx = 32.0;
    double cy = 36.0;
};

struct RenderSpec {
    int height = 64;
    int width = 64;
    double sigma_px = 1.0;
};

// Bones splatted as line segments with Gaussian falloff, accumulated then
// clamped to [0,1]. Deliberately not differentiable; attack gradients flow
// through the victim network only.
Image render(const BodyGeometry& geometry, const Camera& camera, const RenderSpec& spec);

struct Sample {
    Image image;
    PoseParams params;
    BodyGeometry geometry;
};

std::vector<Sample> make_dataset(const Skeleton& skeleton, const PoseLimits& limits,
                                 const Camera& camera, const RenderSpec& spec, const Rng& rng,
                                 int count);

// JSON index + one float64 blob per tensor, hashes recorded in the index.
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& dataset,
                  const Skeleton& skeleton);
std::vector<Sample> load_dataset(const std::filesystem::path& dir, const Skeleton& skeleton);

}  // namespace tba

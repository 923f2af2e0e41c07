#pragma once

#include <filesystem>
#include <vector>

#include "tba/body_model.hpp"
#include "tba/imaging.hpp"
#include "tba/metrics.hpp"
#include "tba/tensor.hpp"

namespace tba {

enum class Architecture { A, B };

// Raw head outputs; differentiable w.r.t. the image and the parameters.
struct VictimOutput {
    Tensor delta;  // [J*3]
    Tensor rho;    // [10]
    Tensor phi;    // [10]
};

// Small convolutional pose regressor. Two variants share the input/output
// contract but differ in widths and in how spatial structure reaches the
// heads (A pools globally, B flattens through a hidden layer).
class VictimModel {
  public:
    VictimModel(Architecture arch, SkeletonProfile profile, int image_height, int image_width,
                Rng init_rng);

    Architecture architecture() const { return arch_; }
    SkeletonProfile profile() const { return profile_; }
    int joint_count() const { return joints_; }
    int input_height() const { return height_; }
    int input_width() const { return width_; }

    // image: [1,H,W]
    VictimOutput forward(const Tensor& image) const;

    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    std::vector<double> parameter_snapshot() const;

    // JSON header + float64 blob; save/load round-trips bit-exactly.
    void save(const std::filesystem::path& base) const;
    static VictimModel load(const std::filesystem::path& base);

  private:
    Architecture arch_;
    SkeletonProfile profile_;
    int joints_;
    int height_, width_;
    std::vector<Tensor> params_;
    std::vector<std::string> param_names_;

    Tensor features(const Tensor& image) const;
};

// Value-level prediction; pose entries are clamped into the canonical
// axis-angle range when materializing PoseParams.
PoseParams predict(const VictimModel& model, const Image& image);

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 60;
    int batch_size = 8;
    std::uint64_t seed = 0;
};

// Mini-batch SGD on the summed squared parameter errors.
void train_victim(VictimModel& model, const std::vector<Sample>& dataset, const TrainConfig& cfg);

MetricsReport evaluate_clean(const VictimModel& model, const std::vector<Sample>& dataset,
                             const Skeleton& skeleton);

// Shared by clean and adversarial evaluation: prediction geometry vs ground
// truth geometry in millimeters.
GeometryPair geometry_pair(const VictimModel& model, const Image& image, const Sample& gt,
                           const Skeleton& skeleton);

}  // namespace tba

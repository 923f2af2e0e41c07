#include "tba/victim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tba/checkpoint.hpp"

namespace tba {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor conv_init(Rng& rng, int cout, int cin, int kh, int kw) {
    double sigma = std::sqrt(2.0 / (cin * kh * kw));
    std::vector<double> w(static_cast<std::size_t>(cout) * cin * kh * kw);
    for (double& v : w) v = sigma * rng.normal();
    return Tensor::from_data({cout, cin, kh, kw}, std::move(w), true);
}

Tensor linear_init(Rng& rng, int out, int in) {
    double sigma = std::sqrt(2.0 / in);
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    for (double& v : w) v = sigma * rng.normal();
    return Tensor::from_data({out, in}, std::move(w), true);
}

int conv_out(int extent, int k, int stride) { return (extent - k) / stride + 1; }

}  // namespace

VictimModel::VictimModel(Architecture arch, SkeletonProfile profile, int image_height,
                         int image_width, Rng init_rng)
    : arch_(arch),
      profile_(profile),
      joints_(profile == SkeletonProfile::Full ? 53 : 22),
      height_(image_height),
      width_(image_width) {
    Rng rng = init_rng.fork(arch == Architecture::A ? "victim/A" : "victim/B");
    auto push = [&](const std::string& name, Tensor t) {
        param_names_.push_back(name);
        params_.push_back(std::move(t));
    };
    int feat_dim;
    if (arch_ == Architecture::A) {
        push("conv1.w", conv_init(rng, 8, 1, 3, 3));
        push("conv1.b", Tensor::zeros({8}, true));
        push("conv2.w", conv_init(rng, 16, 8, 3, 3));
        push("conv2.b", Tensor::zeros({16}, true));
        feat_dim = 16;
    } else {
        push("conv1.w", conv_init(rng, 12, 1, 5, 5));
        push("conv1.b", Tensor::zeros({12}, true));
        push("conv2.w", conv_init(rng, 12, 12, 3, 3));
        push("conv2.b", Tensor::zeros({12}, true));
        int h1 = conv_out(height_, 5, 2), w1 = conv_out(width_, 5, 2);
        int h2 = conv_out(h1, 3, 2), w2 = conv_out(w1, 3, 2);
        int flat = 12 * h2 * w2;
        push("hidden.w", linear_init(rng, 64, flat));
        push("hidden.b", Tensor::zeros({64}, true));
        feat_dim = 64;
    }
    auto head_init = [&](int out, int in) {
        std::vector<double> w(static_cast<std::size_t>(out) * in);
        for (double& v : w) v = 0.05 * rng.normal();
        return Tensor::from_data({out, in}, std::move(w), true);
    };
    push("head_delta.w", head_init(joints_ * 3, feat_dim));
    push("head_delta.b", Tensor::zeros({joints_ * 3}, true));
    push("head_rho.w", head_init(10, feat_dim));
    push("head_rho.b", Tensor::zeros({10}, true));
    push("head_phi.w", head_init(10, feat_dim));
    push("head_phi.b", Tensor::zeros({10}, true));
}

Tensor VictimModel::features(const Tensor& image) const {
    if (image.shape() != Shape{1, height_, width_})
        throw ShapeError("victim: image shape " + shape_str(image.shape()) + " does not match model input [1," +
                         std::to_string(height_) + "," + std::to_string(width_) + "]");
    if (arch_ == Architecture::A) {
        Tensor h1 = relu(conv2d(image, params_[0], params_[1], 2, 0));
        Tensor h2 = relu(conv2d(h1, params_[2], params_[3], 2, 0));
        return global_avg_pool(h2);
    }
    Tensor h1 = relu(conv2d(image, params_[0], params_[1], 2, 0));
    Tensor h2 = relu(conv2d(h1, params_[2], params_[3], 2, 0));
    Tensor flat = reshape(h2, {static_cast<int>(h2.size())});
    return relu(add(matmul(params_[4], flat), params_[5]));
}

VictimOutput VictimModel::forward(const Tensor& image) const {
    Tensor f = features(image);
    std::size_t h = params_.size() - 6;
    VictimOutput out;
    out.delta = add(matmul(params_[h], f), params_[h + 1]);
    out.rho = add(matmul(params_[h + 2], f), params_[h + 3]);
    out.phi = add(matmul(params_[h + 4], f), params_[h + 5]);
    return out;
}

std::vector<double> VictimModel::parameter_snapshot() const {
    std::vector<double> flat;
    for (const Tensor& p : params_) flat.insert(flat.end(), p.values().begin(), p.values().end());
    return flat;
}

PoseParams predict(const VictimModel& model, const Image& image) {
    VictimOutput out = model.forward(image.as_tensor());
    const int J = model.joint_count();
    PoseParams p;
    p.delta.resize(J);
    for (int j = 0; j < J; ++j)
        for (int a = 0; a < 3; ++a)
            p.delta[j][a] = std::clamp(out.delta.at(static_cast<std::size_t>(j) * 3 + a), -kPi, kPi);
    for (int i = 0; i < 10; ++i) p.rho[i] = out.rho.at(i);
    for (int i = 0; i < 10; ++i) p.phi[i] = out.phi.at(i);
    return p;
}

void train_victim(VictimModel& model, const std::vector<Sample>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train_victim: empty dataset");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train_victim: learning rate must be > 0");
    if (cfg.epochs < 1) throw std::invalid_argument("train_victim: epochs must be >= 1");

    const int J = model.joint_count();
    std::vector<Tensor> targets_delta, targets_rho, targets_phi, images;
    for (const Sample& s : dataset) {
        std::vector<double> flat = s.params.flatten();
        targets_delta.push_back(Tensor::from_data(
            {J * 3}, std::vector<double>(flat.begin(), flat.begin() + J * 3)));
        targets_rho.push_back(Tensor::from_data(
            {10}, std::vector<double>(flat.begin() + J * 3, flat.begin() + J * 3 + 10)));
        targets_phi.push_back(Tensor::from_data(
            {10}, std::vector<double>(flat.begin() + J * 3 + 10, flat.end())));
        images.push_back(s.image.as_tensor());
    }

    Rng shuffle_rng = Rng(cfg.seed).fork("victim/shuffle");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            for (Tensor& p : model.parameters()) p.zero_grad();
            Tensor batch_loss;
            for (std::size_t k = start; k < stop; ++k) {
                std::size_t idx = order[k];
                VictimOutput out = model.forward(images[idx]);
                Tensor loss = add(add(sum_squares(sub(out.delta, targets_delta[idx])),
                                      sum_squares(sub(out.rho, targets_rho[idx]))),
                                  sum_squares(sub(out.phi, targets_phi[idx])));
                batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(stop - start));
            if (!std::isfinite(batch_loss.item()))
                throw std::runtime_error("train_victim: non-finite loss at epoch " + std::to_string(epoch));
            backward(batch_loss);
            sgd_step(model.parameters(), cfg.learning_rate);
        }
    }
}

GeometryPair geometry_pair(const VictimModel& model, const Image& image, const Sample& gt,
                           const Skeleton& skeleton) {
    PoseParams pred = predict(model, image);
    BodyGeometry pred_geo = forward_model(skeleton, pred);
    GeometryPair pair;
    pair.pred_joints_mm = to_mm(skeleton, pred_geo.joints);
    pair.gt_joints_mm = to_mm(skeleton, gt.geometry.joints);
    pair.pred_vertices_mm = to_mm(skeleton, pred_geo.vertices);
    pair.gt_vertices_mm = to_mm(skeleton, gt.geometry.vertices);
    return pair;
}

MetricsReport evaluate_clean(const VictimModel& model, const std::vector<Sample>& dataset,
                             const Skeleton& skeleton) {
    if (dataset.empty()) throw std::invalid_argument("evaluate_clean: empty dataset");
    std::vector<GeometryPair> pairs;
    pairs.reserve(dataset.size());
    for (const Sample& s : dataset) pairs.push_back(geometry_pair(model, s.image, s, skeleton));
    return region_report(pairs, region_indices(skeleton));
}

void VictimModel::save(const std::filesystem::path& base) const {
    CheckpointMeta meta;
    meta.fields["kind"] = "victim";
    meta.fields["architecture"] = arch_ == Architecture::A ? "A" : "B";
    meta.fields["profile"] = profile_ == SkeletonProfile::Full ? "full" : "small";
    meta.fields["image_height"] = std::to_string(height_);
    meta.fields["image_width"] = std::to_string(width_);
    save_checkpoint(base, meta, param_names_, params_);
}

VictimModel VictimModel::load(const std::filesystem::path& base) {
    CheckpointMeta meta = peek_checkpoint_meta(base);
    Architecture arch = meta.at("architecture") == "A" ? Architecture::A : Architecture::B;
    SkeletonProfile profile =
        meta.at("profile") == "full" ? SkeletonProfile::Full : SkeletonProfile::Small;
    VictimModel model(arch, profile, std::stoi(meta.at("image_height")),
                      std::stoi(meta.at("image_width")), Rng(0));
    load_checkpoint(base, model.param_names_, model.params_);
    return model;
}

}  // namespace tba

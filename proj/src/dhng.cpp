#include "tba/dhng.hpp"

#include <cmath>

#include "tba/checkpoint.hpp"
#include "tba/kernels.hpp"

namespace tba {

namespace {

Tensor conv_init(Rng& rng, int cout, int cin, int kh, int kw, double gain = 1.0) {
    double sigma = gain * std::sqrt(2.0 / (cin * kh * kw));
    std::vector<double> w(static_cast<std::size_t>(cout) * cin * kh * kw);
    for (double& v : w) v = sigma * rng.normal();
    return Tensor::from_data({cout, cin, kh, kw}, std::move(w), true);
}

Tensor linear_init(Rng& rng, int out, int in, double gain = 1.0) {
    double sigma = gain * std::sqrt(2.0 / in);
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    for (double& v : w) v = sigma * rng.normal();
    return Tensor::from_data({out, in}, std::move(w), true);
}

void require_multiple_of_4(int h, int w) {
    if (h % 4 != 0 || w % 4 != 0 || h < 8 || w < 8)
        throw std::invalid_argument("generator: image dims must be multiples of 4 and >= 8");
}

}  // namespace

// ---- feature extractor ----

Tensor FeatureExtractor::extract(const Tensor& image) const {
    Tensor h = relu(conv2d(image, conv1_w, conv1_b, stride1, pad1));
    return global_avg_pool(conv2d(h, conv2_w, conv2_b, stride2, pad2));
}

void FeatureExtractor::collect_params(std::vector<Tensor>& out) {
    out.push_back(conv1_w);
    out.push_back(conv1_b);
    out.push_back(conv2_w);
    out.push_back(conv2_b);
}

// ---- VAE branch ----

VaeGenerator::VaeGenerator(int h, int w, int latent, Rng init_rng)
    : image_height(h), image_width(w), latent_dim(latent) {
    require_multiple_of_4(h, w);
    Rng rng = init_rng.fork("gen/vae");
    enc1_w = conv_init(rng, 8, 1, 3, 3);
    enc1_b = Tensor::zeros({8}, true);
    enc2_w = conv_init(rng, 16, 8, 3, 3);
    enc2_b = Tensor::zeros({16}, true);
    feat.conv1_w = conv_init(rng, 8, 1, 3, 3);
    feat.conv1_b = Tensor::zeros({8}, true);
    feat.conv2_w = conv_init(rng, 16, 8, 3, 3);
    feat.conv2_b = Tensor::zeros({16}, true);
    mu_w = linear_init(rng, latent, 32);
    mu_b = Tensor::zeros({latent}, true);
    sigma_w = linear_init(rng, latent, 32, 0.1);
    sigma_b = Tensor::full({latent}, -3.0, true);  // softplus(-3) starts sigma small
    const int hw4 = (h / 4) * (w / 4);
    dec_w = linear_init(rng, hw4, latent);
    dec_b = Tensor::zeros({hw4}, true);
    dec1_w = conv_init(rng, 4, 1, 3, 3);
    dec1_b = Tensor::zeros({4}, true);
    // small output gain: the perturbation starts gentle and the adversarial
    // term grows it instead of saturating the pixel clamp on epoch one
    dec2_w = conv_init(rng, 1, 4, 3, 3, 0.05);
    dec2_b = Tensor::zeros({1}, true);
    index_params();
}

void VaeGenerator::index_params() {
    params_.clear();
    names_ = {"enc1.w", "enc1.b", "enc2.w", "enc2.b", "feat1.w", "feat1.b", "feat2.w", "feat2.b",
              "mu.w",   "mu.b",   "sigma.w", "sigma.b", "dec.w",  "dec.b",  "dec1.w", "dec1.b",
              "dec2.w", "dec2.b"};
    params_ = {enc1_w, enc1_b, enc2_w, enc2_b, feat.conv1_w, feat.conv1_b, feat.conv2_w,
               feat.conv2_b, mu_w, mu_b, sigma_w, sigma_b, dec_w, dec_b, dec1_w, dec1_b,
               dec2_w, dec2_b};
}

Tensor VaeGenerator::generate(const Tensor& eps, const Tensor& image, Rng& zeta_rng) const {
    if (eps.shape() != Shape{1, image_height, image_width})
        throw ShapeError("vae_generate: noise shape " + shape_str(eps.shape()) + " does not match [1," +
                         std::to_string(image_height) + "," + std::to_string(image_width) + "]");
    Tensor hbar = global_avg_pool(relu(conv2d(relu(conv2d(eps, enc1_w, enc1_b, 2, 1)), enc2_w, enc2_b, 2, 1)));
    Tensor ell = feat.extract(image);
    Tensor fused = concat(hbar, ell);
    Tensor mu = add(matmul(mu_w, fused), mu_b);
    Tensor sigma = softplus(add(matmul(sigma_w, fused), sigma_b));
    Tensor zeta = Tensor::gaussian(zeta_rng, {latent_dim});
    Tensor z = add(mu, mul(sigma, zeta));
    Tensor plane = reshape(add(matmul(dec_w, z), dec_b), {1, image_height / 4, image_width / 4});
    Tensor up1 = relu(conv2d(upsample2(plane), dec1_w, dec1_b, 1, 1));
    return conv2d(upsample2(up1), dec2_w, dec2_b, 1, 1);
}

std::vector<Tensor>& VaeGenerator::parameters() { return params_; }
const std::vector<Tensor>& VaeGenerator::parameters() const { return params_; }

std::vector<double> VaeGenerator::parameter_snapshot() const {
    std::vector<double> flat;
    for (const Tensor& p : params_) flat.insert(flat.end(), p.values().begin(), p.values().end());
    return flat;
}

void VaeGenerator::save(const std::filesystem::path& base) const {
    CheckpointMeta meta;
    meta.fields["kind"] = "vae_generator";
    meta.fields["image_height"] = std::to_string(image_height);
    meta.fields["image_width"] = std::to_string(image_width);
    meta.fields["latent_dim"] = std::to_string(latent_dim);
    save_checkpoint(base, meta, names_, params_);
}

VaeGenerator VaeGenerator::load(const std::filesystem::path& base) {
    CheckpointMeta meta = peek_checkpoint_meta(base);
    VaeGenerator gen(std::stoi(meta.at("image_height")), std::stoi(meta.at("image_width")),
                     std::stoi(meta.at("latent_dim")), Rng(0));
    load_checkpoint(base, gen.names_, gen.params_);
    return gen;
}

// ---- diffusion branch ----

DiffusionGenerator::DiffusionGenerator(int h, int w, Rng init_rng, int steps_)
    : image_height(h), image_width(w), steps(steps_) {
    require_multiple_of_4(h, w);
    if (steps < 1) throw std::invalid_argument("DiffusionGenerator: steps must be >= 1");
    Rng rng = init_rng.fork("gen/diffusion");
    enc1_w = conv_init(rng, 4, 1, 3, 3);
    enc1_b = Tensor::zeros({4}, true);
    enc2_w = conv_init(rng, 4, 4, 3, 3);
    enc2_b = Tensor::zeros({4}, true);
    dec1_w = conv_init(rng, 4, 4, 3, 3);
    dec1_b = Tensor::zeros({4}, true);
    dec2_w = conv_init(rng, 1, 4, 3, 3, 0.05);
    dec2_b = Tensor::zeros({1}, true);
    den1_w = conv_init(rng, 8, 4, 3, 3);
    den1_b = Tensor::zeros({8}, true);
    den2_w = conv_init(rng, 4, 8, 3, 3);
    den2_b = Tensor::zeros({4}, true);
    time_proj_w = linear_init(rng, 8, embed_dim);
    time_proj_b = Tensor::zeros({8}, true);
    {
        std::vector<double> table(static_cast<std::size_t>(num_conditions) * embed_dim);
        for (double& v : table) v = 0.3 * rng.normal();
        prompt_table = Tensor::from_data({num_conditions, embed_dim}, std::move(table), true);
    }
    prompt_proj_w = linear_init(rng, 8, embed_dim);
    prompt_proj_b = Tensor::zeros({8}, true);
    ctrl_w = conv_init(rng, 8, 1, 4, 4);
    ctrl_b = Tensor::zeros({8}, true);
    zero_w = Tensor::zeros({8, 8, 1, 1}, true);
    zero_b = Tensor::zeros({8}, true);
    index_params();
}

void DiffusionGenerator::index_params() {
    names_ = {"enc1.w", "enc1.b", "enc2.w", "enc2.b", "dec1.w", "dec1.b", "dec2.w", "dec2.b",
              "den1.w", "den1.b", "den2.w", "den2.b", "tproj.w", "tproj.b", "prompt.table",
              "pproj.w", "pproj.b", "ctrl.w", "ctrl.b", "zero.w", "zero.b"};
    params_ = {enc1_w, enc1_b, enc2_w, enc2_b, dec1_w, dec1_b, dec2_w, dec2_b,
               den1_w, den1_b, den2_w, den2_b, time_proj_w, time_proj_b, prompt_table,
               prompt_proj_w, prompt_proj_b, ctrl_w, ctrl_b, zero_w, zero_b};
}

double DiffusionGenerator::alpha(int t) const { return static_cast<double>(t) / steps; }

Tensor DiffusionGenerator::encode(const Tensor& image_shaped) const {
    Tensor h = relu(conv2d(image_shaped, enc1_w, enc1_b, 2, 1));
    return conv2d(h, enc2_w, enc2_b, 2, 1);
}

Tensor DiffusionGenerator::decode(const Tensor& latent) const {
    Tensor h = relu(conv2d(upsample2(latent), dec1_w, dec1_b, 1, 1));
    return conv2d(upsample2(h), dec2_w, dec2_b, 1, 1);
}

Tensor DiffusionGenerator::time_embedding(int t, int dim) {
    std::vector<double> emb(dim);
    for (int i = 0; i < dim / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * i / dim);
        emb[2 * i] = std::sin(t * freq);
        emb[2 * i + 1] = std::cos(t * freq);
    }
    return Tensor::from_data({dim}, std::move(emb));
}

Tensor DiffusionGenerator::predict_noise(const Tensor& chi_t, int t, int cond_id,
                                         const Tensor& image) const {
    if (cond_id < 0 || cond_id >= num_conditions)
        throw std::out_of_range("predict_noise: unknown condition id " + std::to_string(cond_id));
    if (t < 0 || t > steps)
        throw std::out_of_range("predict_noise: step " + std::to_string(t) + " outside [0, " +
                                std::to_string(steps) + "]");
    Tensor h = conv2d(chi_t, den1_w, den1_b, 1, 1);
    Tensor tbias = add(matmul(time_proj_w, time_embedding(t, embed_dim)), time_proj_b);
    Tensor pbias = add(matmul(prompt_proj_w, row_select(prompt_table, cond_id)), prompt_proj_b);
    Tensor ctrl = relu(conv2d(image, ctrl_w, ctrl_b, 4, 0));
    Tensor injected = add(add_channel_bias(add_channel_bias(h, tbias), pbias),
                          conv2d(ctrl, zero_w, zero_b, 1, 0));
    return conv2d(relu(injected), den2_w, den2_b, 1, 1);
}

std::vector<Tensor>& DiffusionGenerator::parameters() { return params_; }
const std::vector<Tensor>& DiffusionGenerator::parameters() const { return params_; }

std::vector<double> DiffusionGenerator::parameter_snapshot() const {
    std::vector<double> flat;
    for (const Tensor& p : params_) flat.insert(flat.end(), p.values().begin(), p.values().end());
    return flat;
}

void DiffusionGenerator::save(const std::filesystem::path& base) const {
    CheckpointMeta meta;
    meta.fields["kind"] = "diffusion_generator";
    meta.fields["image_height"] = std::to_string(image_height);
    meta.fields["image_width"] = std::to_string(image_width);
    meta.fields["steps"] = std::to_string(steps);
    save_checkpoint(base, meta, names_, params_);
}

DiffusionGenerator DiffusionGenerator::load(const std::filesystem::path& base) {
    CheckpointMeta meta = peek_checkpoint_meta(base);
    DiffusionGenerator gen(std::stoi(meta.at("image_height")), std::stoi(meta.at("image_width")),
                           Rng(0), std::stoi(meta.at("steps")));
    load_checkpoint(base, gen.names_, gen.params_);
    return gen;
}

// ---- free operations ----

Tensor diffusion_forward(const Tensor& chi, int t, int steps, const Tensor& eps_latent) {
    if (t < 0 || t > steps)
        throw std::out_of_range("diffusion_forward: step " + std::to_string(t) + " outside [0, " +
                                std::to_string(steps) + "]");
    if (chi.shape() != eps_latent.shape())
        throw ShapeError("diffusion_forward: latent " + shape_str(chi.shape()) + " vs noise " +
                         shape_str(eps_latent.shape()));
    return add(chi, scale(eps_latent, static_cast<double>(t) / steps));
}

Tensor controlnet_loss(const Tensor& eps, const Tensor& eps_star) {
    if (eps.shape() != eps_star.shape())
        throw ShapeError("controlnet_loss: " + shape_str(eps.shape()) + " vs " +
                         shape_str(eps_star.shape()));
    return scale(sum_squares(sub(eps, eps_star)), 1.0 / static_cast<double>(eps.size()));
}

ControlNetSample controlnet_generate(const DiffusionGenerator& gen, const Tensor& eps,
                                     const Tensor& image, int cond_id, Rng& rng, double budget) {
    if (!(budget > 0.0)) throw std::invalid_argument("controlnet_generate: budget must be positive");
    ControlNetSample out;
    out.t = static_cast<int>(rng.uniform_int(1, gen.steps));
    Tensor chi = gen.encode(eps);
    out.eps_added = Tensor::gaussian(rng, chi.shape());
    Tensor chi_t = diffusion_forward(chi, out.t, gen.steps, out.eps_added);
    out.eps_star = gen.predict_noise(chi_t, out.t, cond_id, image);
    Tensor decoded = gen.decode(out.eps_star);
    // hard L-inf cap; the gain is a constant in the graph so beta2 stays
    // differentiable in theta_2
    double peak = kernels::max_abs(decoded.values().data(), decoded.size());
    double gain = budget / std::max(peak, budget);
    out.beta2 = scale(decoded, gain);
    return out;
}

Tensor combine_noise(const Tensor& beta1, const Tensor& beta2) {
    if (beta1.shape() != beta2.shape())
        throw ShapeError("combine_noise: " + shape_str(beta1.shape()) + " vs " +
                         shape_str(beta2.shape()));
    return add(beta1, beta2);
}

std::vector<std::string> condition_labels() {
    return {"none", "text1", "text2", "text3", "text4"};
}

}  // namespace tba

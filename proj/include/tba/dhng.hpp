#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tba/rng.hpp"
#include "tba/tensor.hpp"

namespace tba {

// Two conv layers and an average pooling layer over the conditioning image.
struct FeatureExtractor {
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    int stride1 = 2, pad1 = 1, stride2 = 2, pad2 = 1;

    // avgpool(conv2(relu(conv1(image))))
    Tensor extract(const Tensor& image) const;
    void collect_params(std::vector<Tensor>& out);
};

// Noise branch one: encodes input Gaussian noise together with image
// features into a latent, reparameterizes, and decodes an image-shaped
// perturbation. All tensors below are the trainable state (theta_1).
struct VaeGenerator {
    int image_height = 64, image_width = 64;
    int latent_dim = 32;

    Tensor enc1_w, enc1_b;  // noise encoder
    Tensor enc2_w, enc2_b;
    FeatureExtractor feat;  // image branch
    Tensor mu_w, mu_b;
    Tensor sigma_w, sigma_b;  // softplus keeps sigma positive
    Tensor dec_w, dec_b;      // latent -> (H/4 * W/4)
    Tensor dec1_w, dec1_b;    // upsampled conv stages
    Tensor dec2_w, dec2_b;

    VaeGenerator(int image_height, int image_width, int latent_dim, Rng init_rng);

    // beta1 = D(z), z = mu + sigma * zeta with a fresh zeta draw.
    Tensor generate(const Tensor& eps, const Tensor& image, Rng& zeta_rng) const;

    std::vector<Tensor>& parameters();
    const std::vector<Tensor>& parameters() const;
    std::vector<double> parameter_snapshot() const;
    void save(const std::filesystem::path& base) const;
    static VaeGenerator load(const std::filesystem::path& base);

  private:
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
    void index_params();
};

// Noise branch two: a toy latent-diffusion denoiser conditioned on the time
// step, a prompt id, and the clean image through zero-initialized 1x1
// control convolutions (theta_2).
struct DiffusionGenerator {
    int image_height = 64, image_width = 64;
    int steps = 50;                 // T; alpha_t = t/T
    int num_conditions = 5;         // id 0 reserved for "no text"
    int embed_dim = 8;

    Tensor enc1_w, enc1_b;  // image <-> latent
    Tensor enc2_w, enc2_b;
    Tensor dec1_w, dec1_b;
    Tensor dec2_w, dec2_b;
    Tensor den1_w, den1_b;  // denoiser trunk
    Tensor den2_w, den2_b;
    Tensor time_proj_w, time_proj_b;
    Tensor prompt_table;
    Tensor prompt_proj_w, prompt_proj_b;
    Tensor ctrl_w, ctrl_b;  // clean-image feature tap
    Tensor zero_w, zero_b;  // zero convolution, exactly zero at init

    DiffusionGenerator(int image_height, int image_width, Rng init_rng, int steps = 50);

    double alpha(int t) const;
    Tensor encode(const Tensor& image_shaped) const;
    Tensor decode(const Tensor& latent) const;
    // Sinusoidal embedding of the step index (a constant, not trained).
    static Tensor time_embedding(int t, int dim);
    // eps_star = denoiser(chi_t, t, T_t, T_f, image); unknown cond_id throws.
    Tensor predict_noise(const Tensor& chi_t, int t, int cond_id, const Tensor& image) const;

    std::vector<Tensor>& parameters();
    const std::vector<Tensor>& parameters() const;
    std::vector<double> parameter_snapshot() const;
    void save(const std::filesystem::path& base) const;
    static DiffusionGenerator load(const std::filesystem::path& base);

  private:
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
    void index_params();
};

// chi_t = chi + (t/T) * eps; t must lie in [0, T].
Tensor diffusion_forward(const Tensor& chi, int t, int steps, const Tensor& eps_latent);

// Mean squared difference between actual and predicted noise.
Tensor controlnet_loss(const Tensor& eps, const Tensor& eps_star);

struct ControlNetSample {
    Tensor eps_star;   // predicted noise, latent shape
    Tensor beta2;      // gain-scaled decode, image shape, L-inf <= budget
    Tensor eps_added;  // the latent noise that was actually added
    int t = 0;
};

// Samples t in [1, T], diffuses Enc(eps), predicts the noise and decodes it
// into an image-shaped perturbation capped at the generator budget.
ControlNetSample controlnet_generate(const DiffusionGenerator& gen, const Tensor& eps,
                                     const Tensor& image, int cond_id, Rng& rng, double budget);

struct NoiseBundle {
    Tensor beta1;
    Tensor beta2;
    Tensor beta;  // beta1 + beta2
};

Tensor combine_noise(const Tensor& beta1, const Tensor& beta2);

// Provenance labels for the condition ids (0 = no text).
std::vector<std::string> condition_labels();

}  // namespace tba

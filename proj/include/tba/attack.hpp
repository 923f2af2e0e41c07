#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tba/dhng.hpp"
#include "tba/imaging.hpp"
#include "tba/victim.hpp"

namespace tba {

enum class MixingRule { Additive, Lambda };

struct AttackConfig {
    double lambda = 0.5;           // image/noise mixing coefficient
    double upsilon = 2.0 / 255.0;  // PGD step size
    double vartheta = 0.05;        // PGD projection threshold (pixel units)
    int pgd_iters = 10;            // n
    int epochs = 10;               // N, generator training epochs
    double generator_budget = 0.05;
    double eta = 0.001;  // generator learning rate
    int cond_id = 4;
    std::uint64_t seed = 0;
    MixingRule mixing = MixingRule::Additive;

    void validate() const;
};

enum class AttackVariant {
    VaeOnly,
    ControlNetOnly,
    Dhng,
    PgdOnly,
    DhngPgd,
    DhngAdv,
    FullTba,
};

const char* to_string(AttackVariant v);
std::optional<AttackVariant> variant_from_string(const std::string& s);
bool variant_uses_vae(AttackVariant v);
bool variant_uses_controlnet(AttackVariant v);
bool variant_uses_adv_loss(AttackVariant v);
bool variant_uses_pgd(AttackVariant v);

// Any differentiable image -> pose map; adapts victim models and test stubs.
using DifferentiableVictim = std::function<VictimOutput(const Tensor&)>;
DifferentiableVictim as_differentiable(const VictimModel& model);

struct LossWeights {
    double delta = 1.0, rho = 1.0, phi = 1.0;
};

// Negative weighted squared deviation between clean and adversarial outputs;
// the clean side is treated as a constant reference.
Tensor adversarial_loss(const VictimOutput& clean_out, const VictimOutput& adv_out,
                        const LossWeights& weights = {});

// (1/N) sum_i sum_xy (adv_i - clean_i)^2
Tensor mse_loss(std::span<const Tensor> clean, std::span<const Tensor> adv);

// lambda*clean + (1-lambda)*beta, clamped to the pixel range.
Tensor mix_adversarial(const Tensor& clean, const Tensor& beta, double lambda);

struct DhngOptions {
    bool use_vae = true;
    bool use_controlnet = true;
    bool use_adv_loss = true;
};

struct DhngStats {
    // mean squared victim-output deviation per epoch, before that epoch's update
    std::vector<double> epoch_deviation;
    std::vector<double> epoch_l1;
    std::vector<double> epoch_l2;
};

struct DhngResult {
    std::vector<NoiseBundle> noise;  // per image, from the final epoch's pass
    DhngStats stats;
};

// Alternating updates of theta_1 (L1 = L_MSE + L_adv) and theta_2
// (L2 = L_Con + L_MSE + L_adv) against a frozen victim, with rate eta.
// Null generators are skipped (ablations).
DhngResult train_dhng(VaeGenerator* vae, DiffusionGenerator* diff,
                      const DifferentiableVictim& victim, const std::vector<Image>& images,
                      const AttackConfig& cfg, const DhngOptions& opts = {});

using PgdObserver = std::function<void(int step, std::span<const double> beta)>;

// Sign-gradient ascent on the output deviation with an L-inf projection onto
// the vartheta ball around beta0; the adversarial image is clamped to [0,1]
// before every victim call.
Tensor pgd_refine(const Tensor& beta0, const DifferentiableVictim& victim, const Image& clean,
                  const AttackConfig& cfg, const PgdObserver& observer = nullptr);

// Single sign step of magnitude vartheta from beta = 0.
Image fgsm(const Image& clean, const DifferentiableVictim& victim, double vartheta);

Image random_noise_baseline(const Image& clean, double intensity, Rng& rng);
Image patch_baseline(const Image& clean, int patch_side);

struct AdversarialSample {
    Image clean;
    Image adversarial;
    NoiseBundle noise;   // generator output (beta = beta1 + beta2)
    Tensor beta_final;   // after PGD when it ran, else equals noise.beta
    AttackConfig config;
};

// Trained generator state and diagnostics from a pipeline run.
struct TbaArtifacts {
    std::optional<VaeGenerator> vae;
    std::optional<DiffusionGenerator> diffusion;
    DhngStats stats;
};

// Full pipeline: fresh generators, DHNG training, PGD refinement, final
// adversarial images clamped to [0,1].
std::vector<AdversarialSample> run_tba(const std::vector<Image>& clean_images,
                                       const VictimModel& victim, const AttackConfig& cfg,
                                       AttackVariant variant = AttackVariant::FullTba,
                                       TbaArtifacts* artifacts = nullptr);

}  // namespace tba

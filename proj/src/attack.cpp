#include "tba/attack.hpp"

#include <cmath>

#include "tba/kernels.hpp"

namespace tba {

void AttackConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("attack: lambda outside [0,1]");
    if (!(upsilon > 0.0)) throw std::invalid_argument("attack: upsilon must be positive");
    if (!(vartheta > 0.0)) throw std::invalid_argument("attack: vartheta must be positive");
    if (pgd_iters < 0) throw std::invalid_argument("attack: pgd_iters must be >= 0");
    if (epochs < 1) throw std::invalid_argument("attack: epochs must be >= 1");
    if (!(generator_budget > 0.0)) throw std::invalid_argument("attack: generator budget must be positive");
    if (!(eta >= 0.0)) throw std::invalid_argument("attack: eta must be >= 0");
}

const char* to_string(AttackVariant v) {
    switch (v) {
        case AttackVariant::VaeOnly: return "vae_only";
        case AttackVariant::ControlNetOnly: return "controlnet_only";
        case AttackVariant::Dhng: return "dhng";
        case AttackVariant::PgdOnly: return "pgd_only";
        case AttackVariant::DhngPgd: return "dhng_pgd";
        case AttackVariant::DhngAdv: return "dhng_adv";
        case AttackVariant::FullTba: return "full_tba";
    }
    return "?";
}

std::optional<AttackVariant> variant_from_string(const std::string& s) {
    for (AttackVariant v :
         {AttackVariant::VaeOnly, AttackVariant::ControlNetOnly, AttackVariant::Dhng,
          AttackVariant::PgdOnly, AttackVariant::DhngPgd, AttackVariant::DhngAdv,
          AttackVariant::FullTba})
        if (s == to_string(v)) return v;
    return std::nullopt;
}

bool variant_uses_vae(AttackVariant v) {
    return v != AttackVariant::ControlNetOnly && v != AttackVariant::PgdOnly;
}
bool variant_uses_controlnet(AttackVariant v) {
    return v != AttackVariant::VaeOnly && v != AttackVariant::PgdOnly;
}
bool variant_uses_adv_loss(AttackVariant v) {
    return v == AttackVariant::DhngAdv || v == AttackVariant::FullTba;
}
bool variant_uses_pgd(AttackVariant v) {
    return v == AttackVariant::PgdOnly || v == AttackVariant::DhngPgd ||
           v == AttackVariant::FullTba;
}

DifferentiableVictim as_differentiable(const VictimModel& model) {
    return [&model](const Tensor& image) { return model.forward(image); };
}

Tensor adversarial_loss(const VictimOutput& clean_out, const VictimOutput& adv_out,
                        const LossWeights& weights) {
    if (clean_out.delta.shape() != adv_out.delta.shape() ||
        clean_out.rho.shape() != adv_out.rho.shape() ||
        clean_out.phi.shape() != adv_out.phi.shape())
        throw ShapeError("adversarial_loss: clean/adversarial output shapes differ");
    Tensor acc = add(add(scale(sum_squares(sub(adv_out.delta, clean_out.delta)), weights.delta),
                         scale(sum_squares(sub(adv_out.rho, clean_out.rho)), weights.rho)),
                     scale(sum_squares(sub(adv_out.phi, clean_out.phi)), weights.phi));
    return neg(acc);
}

Tensor mse_loss(std::span<const Tensor> clean, std::span<const Tensor> adv) {
    if (clean.size() != adv.size() || clean.empty())
        throw std::invalid_argument("mse_loss: batch sizes differ or empty");
    Tensor acc;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        if (clean[i].shape() != adv[i].shape())
            throw ShapeError("mse_loss: " + shape_str(clean[i].shape()) + " vs " +
                             shape_str(adv[i].shape()));
        Tensor term = sum_squares(sub(adv[i], clean[i]));
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, 1.0 / static_cast<double>(clean.size()));
}

Tensor mix_adversarial(const Tensor& clean, const Tensor& beta, double lambda) {
    if (clean.shape() != beta.shape())
        throw ShapeError("mix_adversarial: " + shape_str(clean.shape()) + " vs " +
                         shape_str(beta.shape()));
    return clip(add(scale(clean, lambda), scale(beta, 1.0 - lambda)), 0.0, 1.0);
}

namespace {

Tensor deviation_sumsq(const VictimOutput& ref, const VictimOutput& out) {
    return add(add(sum_squares(sub(out.delta, ref.delta)), sum_squares(sub(out.rho, ref.rho))),
               sum_squares(sub(out.phi, ref.phi)));
}

VictimOutput detach_output(const VictimOutput& out) {
    return {out.delta.detach(), out.rho.detach(), out.phi.detach()};
}

// Gradient of the output-deviation loss w.r.t. beta at the given value,
// with the adversarial image clamped to the pixel range.
std::vector<double> deviation_gradient(const DifferentiableVictim& victim, const Tensor& clean,
                                       const VictimOutput& ref, const Shape& shape,
                                       const std::vector<double>& beta_values) {
    Tensor beta = Tensor::from_data(shape, beta_values, true);
    Tensor adv = clip(add(clean, beta), 0.0, 1.0);
    VictimOutput out = victim(adv);
    backward(deviation_sumsq(ref, out));
    auto g = beta.grad();
    if (g.empty()) return std::vector<double>(beta_values.size(), 0.0);  // constant victim
    return std::vector<double>(g.begin(), g.end());
}

}  // namespace

DhngResult train_dhng(VaeGenerator* vae, DiffusionGenerator* diff,
                      const DifferentiableVictim& victim, const std::vector<Image>& images,
                      const AttackConfig& cfg, const DhngOptions& opts) {
    cfg.validate();
    if (images.empty()) throw std::invalid_argument("train_dhng: no images");
    const bool use_vae = opts.use_vae && vae != nullptr;
    const bool use_cn = opts.use_controlnet && diff != nullptr;
    if (!use_vae && !use_cn) throw std::invalid_argument("train_dhng: no generator branch active");

    Rng root(cfg.seed);
    Rng eps_rng = root.fork("attack/eps");
    Rng zeta_rng = root.fork("attack/zeta");
    Rng diff_rng = root.fork("attack/diffusion");

    std::vector<Tensor> clean, eps;
    std::vector<VictimOutput> refs;
    for (const Image& img : images) {
        Tensor t = img.as_tensor();
        refs.push_back(detach_output(victim(t)));
        eps.push_back(Tensor::gaussian(eps_rng, t.shape()));
        clean.push_back(std::move(t));
    }

    std::vector<Tensor> all_params;
    if (use_vae)
        for (Tensor& p : vae->parameters()) all_params.push_back(p);
    if (use_cn)
        for (Tensor& p : diff->parameters()) all_params.push_back(p);

    DhngResult result;
    result.noise.resize(images.size());
    const double inv_n = 1.0 / static_cast<double>(images.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (Tensor& p : all_params) p.zero_grad();
        Tensor l_mse, l_adv, l_con;
        double deviation = 0.0;
        for (std::size_t i = 0; i < images.size(); ++i) {
            NoiseBundle bundle;
            if (use_vae) bundle.beta1 = vae->generate(eps[i], clean[i], zeta_rng);
            ControlNetSample cn;
            if (use_cn) {
                cn = controlnet_generate(*diff, eps[i], clean[i], cfg.cond_id, diff_rng,
                                         cfg.generator_budget);
                bundle.beta2 = cn.beta2;
            }
            Tensor beta = use_vae && use_cn ? combine_noise(bundle.beta1, bundle.beta2)
                                            : (use_vae ? bundle.beta1 : bundle.beta2);
            bundle.beta = beta;
            Tensor adv = cfg.mixing == MixingRule::Additive
                             ? clip(add(clean[i], beta), 0.0, 1.0)
                             : mix_adversarial(clean[i], beta, cfg.lambda);
            VictimOutput out = victim(adv);

            Tensor mse_i = sum_squares(sub(adv, clean[i]));
            l_mse = l_mse.defined() ? add(l_mse, mse_i) : mse_i;
            Tensor dev_i = deviation_sumsq(refs[i], out);
            deviation += dev_i.item();
            if (opts.use_adv_loss) {
                Tensor adv_i = adversarial_loss(refs[i], out);
                l_adv = l_adv.defined() ? add(l_adv, adv_i) : adv_i;
            }
            if (use_cn) {
                Tensor con_i = controlnet_loss(cn.eps_added, cn.eps_star);
                l_con = l_con.defined() ? add(l_con, con_i) : con_i;
            }
            result.noise[i] = {bundle.beta1.defined() ? bundle.beta1.detach() : Tensor(),
                               bundle.beta2.defined() ? bundle.beta2.detach() : Tensor(),
                               beta.detach()};
        }
        l_mse = scale(l_mse, inv_n);
        if (l_adv.defined()) l_adv = scale(l_adv, inv_n);
        if (l_con.defined()) l_con = scale(l_con, inv_n);

        // One backward of L_MSE + L_adv + L_Con delivers grad(L1) to theta_1
        // and grad(L2) to theta_2, since L_Con never touches theta_1.
        Tensor total = l_mse;
        if (l_adv.defined()) total = add(total, l_adv);
        if (l_con.defined()) total = add(total, l_con);
        if (!std::isfinite(total.item()))
            throw std::runtime_error("train_dhng: non-finite loss at epoch " + std::to_string(epoch));

        double l1 = l_mse.item() + (l_adv.defined() ? l_adv.item() : 0.0);
        result.stats.epoch_l1.push_back(l1);
        result.stats.epoch_l2.push_back(l1 + (l_con.defined() ? l_con.item() : 0.0));
        result.stats.epoch_deviation.push_back(deviation * inv_n);

        backward(total);
        if (use_vae) sgd_step(vae->parameters(), cfg.eta);
        if (use_cn) sgd_step(diff->parameters(), cfg.eta);
    }
    return result;
}

Tensor pgd_refine(const Tensor& beta0, const DifferentiableVictim& victim, const Image& clean,
                  const AttackConfig& cfg, const PgdObserver& observer) {
    cfg.validate();
    Tensor clean_t = clean.as_tensor();
    if (beta0.shape() != clean_t.shape())
        throw ShapeError("pgd_refine: beta " + shape_str(beta0.shape()) + " vs image " +
                         shape_str(clean_t.shape()));
    VictimOutput ref = detach_output(victim(clean_t));

    const std::size_t n = beta0.size();
    std::vector<double> base(beta0.values().begin(), beta0.values().end());
    std::vector<double> beta = base;
    std::vector<double> step(n), shifted(n), projected(n);
    for (int k = 0; k < cfg.pgd_iters; ++k) {
        std::vector<double> grad = deviation_gradient(victim, clean_t, ref, beta0.shape(), beta);
        kernels::sign(step.data(), grad.data(), n);
        kernels::axpy(beta.data(), step.data(), cfg.upsilon, n);
        // project onto the L-inf ball of radius vartheta around beta0
        kernels::sub(shifted.data(), beta.data(), base.data(), n);
        kernels::clamp(projected.data(), shifted.data(), -cfg.vartheta, cfg.vartheta, n);
        kernels::add(beta.data(), base.data(), projected.data(), n);
        if (observer) observer(k, beta);
    }
    return Tensor::from_data(beta0.shape(), std::move(beta));
}

Image fgsm(const Image& clean, const DifferentiableVictim& victim, double vartheta) {
    if (!(vartheta > 0.0)) throw std::invalid_argument("fgsm: vartheta must be positive");
    Tensor clean_t = clean.as_tensor();
    VictimOutput ref = detach_output(victim(clean_t));
    const std::size_t n = clean_t.size();
    std::vector<double> zero(n, 0.0);
    std::vector<double> grad = deviation_gradient(victim, clean_t, ref, clean_t.shape(), zero);
    std::vector<double> beta(n);
    kernels::sign(beta.data(), grad.data(), n);
    kernels::scale(beta.data(), beta.data(), vartheta, n);
    std::vector<double> adv(n);
    kernels::add(adv.data(), clean_t.values().data(), beta.data(), n);
    kernels::clamp(adv.data(), adv.data(), 0.0, 1.0, n);
    Image out = clean;
    out.pixels = std::move(adv);
    return out;
}

Image random_noise_baseline(const Image& clean, double intensity, Rng& rng) {
    if (intensity < 0.0) throw std::invalid_argument("random_noise_baseline: negative intensity");
    Image out = clean;
    for (double& p : out.pixels) {
        p += rng.uniform(-intensity, intensity);
        p = std::clamp(p, 0.0, 1.0);
    }
    return out;
}

Image patch_baseline(const Image& clean, int patch_side) {
    if (patch_side < 0 || patch_side >= std::min(clean.height, clean.width))
        throw std::invalid_argument("patch_baseline: patch must fit inside the image");
    Image out = clean;
    const int y0 = (clean.height - patch_side) / 2;
    const int x0 = (clean.width - patch_side) / 2;
    for (int c = 0; c < clean.channels; ++c)
        for (int y = y0; y < y0 + patch_side; ++y)
            for (int x = x0; x < x0 + patch_side; ++x)
                out.pixels[(static_cast<std::size_t>(c) * clean.height + y) * clean.width + x] = 1.0;
    return out;
}

std::vector<AdversarialSample> run_tba(const std::vector<Image>& clean_images,
                                       const VictimModel& victim, const AttackConfig& cfg,
                                       AttackVariant variant, TbaArtifacts* artifacts) {
    cfg.validate();
    if (clean_images.empty()) throw std::invalid_argument("run_tba: no images");
    DifferentiableVictim f = as_differentiable(victim);

    const int h = victim.input_height(), w = victim.input_width();
    Rng init = Rng(cfg.seed).fork("attack/init");

    std::vector<NoiseBundle> bundles(clean_images.size());
    if (variant_uses_vae(variant) || variant_uses_controlnet(variant)) {
        std::optional<VaeGenerator> vae;
        std::optional<DiffusionGenerator> diff;
        if (variant_uses_vae(variant)) vae.emplace(h, w, 32, init);
        if (variant_uses_controlnet(variant)) diff.emplace(h, w, init, 50);
        DhngOptions opts;
        opts.use_vae = vae.has_value();
        opts.use_controlnet = diff.has_value();
        opts.use_adv_loss = variant_uses_adv_loss(variant);
        DhngResult trained = train_dhng(vae ? &*vae : nullptr, diff ? &*diff : nullptr, f,
                                        clean_images, cfg, opts);
        bundles = std::move(trained.noise);
        if (artifacts) {
            artifacts->vae = std::move(vae);
            artifacts->diffusion = std::move(diff);
            artifacts->stats = std::move(trained.stats);
        }
    } else {
        // pure PGD: random start inside the projection ball; the deviation
        // loss has an exact zero gradient at beta = 0
        Rng start = Rng(cfg.seed).fork("attack/pgd_start");
        for (std::size_t i = 0; i < clean_images.size(); ++i) {
            std::vector<double> b(static_cast<std::size_t>(h) * w);
            for (double& v : b) v = start.uniform(-cfg.vartheta, cfg.vartheta);
            bundles[i] = {Tensor(), Tensor(), Tensor::from_data({1, h, w}, std::move(b))};
        }
    }

    std::vector<AdversarialSample> out;
    out.reserve(clean_images.size());
    for (std::size_t i = 0; i < clean_images.size(); ++i) {
        AdversarialSample sample;
        sample.clean = clean_images[i];
        sample.noise = bundles[i];
        sample.config = cfg;
        sample.beta_final = variant_uses_pgd(variant)
                                ? pgd_refine(bundles[i].beta, f, clean_images[i], cfg)
                                : bundles[i].beta;
        Tensor adv = clip(add(clean_images[i].as_tensor(), sample.beta_final), 0.0, 1.0);
        sample.adversarial = Image::from_tensor(adv);
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace tba

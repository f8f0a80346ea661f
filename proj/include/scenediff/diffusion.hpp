#pragma once

// EDM-style latent diffusion: sigma sampling, preconditioning
// coefficients, training losses, the rho-spaced noise schedule, a Heun
// probability-flow ODE sampler, and an analytic Gaussian-mixture
// denoiser used as a quantitative oracle for the sampler.

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "scenediff/autoencoder.hpp"
#include "scenediff/diffnet.hpp"

namespace scenediff {

struct EDMConfig {
    double p_mean = -0.5;   // P_mu of the log-normal sigma distribution
    double p_std = 1.0;     // P_sigma
    double sigma_data = 0.5;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int steps = 100;
    double beta_y = 0.2;    // decoded-loss weight

    void validate() const {
        if (p_std <= 0.0) throw std::invalid_argument("EDMConfig: P_sigma must be > 0");
        if (sigma_data <= 0.0) throw std::invalid_argument("EDMConfig: sigma_data must be > 0");
        if (!(0.0 < sigma_min && sigma_min < sigma_max))
            throw std::invalid_argument("EDMConfig: need 0 < sigma_min < sigma_max");
        if (rho <= 0.0) throw std::invalid_argument("EDMConfig: rho must be > 0");
        if (steps < 2) throw std::invalid_argument("EDMConfig: need at least 2 steps");
        if (beta_y < 0.0) throw std::invalid_argument("EDMConfig: beta_y must be >= 0");
    }
};

struct EdmCoeffs {
    double c_in = 0.0;
    double c_skip = 0.0;
    double c_out = 0.0;
    double lambda = 0.0;  // loss weight; lambda * c_out^2 == 1
};

inline EdmCoeffs edm_coeffs(double sigma, double sigma_data) {
    if (sigma <= 0.0 || sigma_data <= 0.0)
        throw std::domain_error("edm_coeffs: sigma and sigma_data must be > 0");
    double s2 = sigma * sigma + sigma_data * sigma_data;
    EdmCoeffs c;
    c.c_in = 1.0 / std::sqrt(s2);
    c.c_skip = sigma_data * sigma_data / s2;
    c.c_out = sigma * sigma_data / std::sqrt(s2);
    c.lambda = s2 / (sigma * sigma_data * sigma * sigma_data);
    return c;
}

inline double sample_sigma(std::mt19937_64& rng, double p_mean, double p_std) {
    if (p_std <= 0.0) throw std::invalid_argument("sample_sigma: P_sigma must be > 0");
    std::normal_distribution<double> n(0.0, 1.0);
    return std::exp(p_mean + p_std * n(rng));
}

// Strictly decreasing sigma_max..sigma_min with a trailing 0 for the
// last integration step.
inline std::vector<double> noise_schedule(const EDMConfig& cfg) {
    cfg.validate();
    std::vector<double> sigmas(cfg.steps + 1);
    double lo = std::pow(cfg.sigma_min, 1.0 / cfg.rho);
    double hi = std::pow(cfg.sigma_max, 1.0 / cfg.rho);
    for (int i = 0; i < cfg.steps; ++i) {
        double t = static_cast<double>(i) / (cfg.steps - 1);
        sigmas[i] = std::pow(hi + t * (lo - hi), cfg.rho);
    }
    sigmas[0] = cfg.sigma_max;
    sigmas[cfg.steps - 1] = cfg.sigma_min;
    sigmas[cfg.steps] = 0.0;
    return sigmas;
}

// Denoised-estimate oracle type: D(z, sigma) -> estimate of the clean z.
using DenoiserFn = std::function<std::vector<double>(const std::vector<double>&, double)>;

// Second-order (Heun) integration of dz/dsigma = (z - D(z;sigma))/sigma
// from sigma_max down to 0; the final step to sigma = 0 is first-order.
inline std::vector<double> ode_integrate(const DenoiserFn& denoiser,
                                         std::vector<double> z,
                                         const std::vector<double>& sigmas) {
    auto check_finite = [](const std::vector<double>& v) {
        for (double x : v)
            if (!std::isfinite(x)) throw std::runtime_error("ode_integrate: non-finite state");
    };
    for (size_t i = 0; i + 1 < sigmas.size(); ++i) {
        double s0 = sigmas[i], s1 = sigmas[i + 1];
        std::vector<double> d0 = denoiser(z, s0);
        for (size_t k = 0; k < z.size(); ++k) d0[k] = (z[k] - d0[k]) / s0;
        if (s1 <= 0.0) {
            for (size_t k = 0; k < z.size(); ++k) z[k] += (s1 - s0) * d0[k];
        } else {
            std::vector<double> ze(z.size());
            for (size_t k = 0; k < z.size(); ++k) ze[k] = z[k] + (s1 - s0) * d0[k];
            std::vector<double> d1 = denoiser(ze, s1);
            for (size_t k = 0; k < z.size(); ++k) {
                d1[k] = (ze[k] - d1[k]) / s1;
                z[k] += 0.5 * (s1 - s0) * (d0[k] + d1[k]);
            }
        }
        check_finite(z);
    }
    return z;
}

inline std::vector<double> ode_sample(const DenoiserFn& denoiser, const EDMConfig& cfg,
                                      size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> z(dim);
    for (double& x : z) x = cfg.sigma_max * n(rng);
    return ode_integrate(denoiser, std::move(z), noise_schedule(cfg));
}

// ----- analytic Gaussian-mixture denoiser (verification oracle) -----

struct GaussianMixture {
    struct Component {
        double weight = 1.0;
        std::vector<double> mean;
        std::vector<double> var;  // diagonal covariance
    };
    std::vector<Component> components;

    void validate() const {
        if (components.empty()) throw std::invalid_argument("GaussianMixture: empty");
        double total = 0.0;
        size_t dim = components.front().mean.size();
        for (const auto& c : components) {
            if (c.weight < 0.0) throw std::invalid_argument("GaussianMixture: negative weight");
            if (c.mean.size() != dim || c.var.size() != dim)
                throw std::invalid_argument("GaussianMixture: dimension mismatch");
            for (double v : c.var)
                if (v <= 0.0) throw std::invalid_argument("GaussianMixture: var must be > 0");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("GaussianMixture: weights must sum to 1");
    }

    std::vector<double> sample(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> n(0.0, 1.0);
        double r = u(rng);
        const Component* pick = &components.back();
        for (const auto& c : components) {
            if (r < c.weight) {
                pick = &c;
                break;
            }
            r -= c.weight;
        }
        std::vector<double> x(pick->mean.size());
        for (size_t d = 0; d < x.size(); ++d)
            x[d] = pick->mean[d] + std::sqrt(pick->var[d]) * n(rng);
        return x;
    }
};

// Exact posterior mean E[x0 | z] for x0 ~ mixture, z = x0 + sigma * eps.
inline std::vector<double> gm_denoiser(const GaussianMixture& mix,
                                       const std::vector<double>& z, double sigma) {
    if (sigma <= 0.0) throw std::domain_error("gm_denoiser: sigma must be > 0");
    size_t dim = z.size();
    size_t k = mix.components.size();
    std::vector<double> logw(k);
    for (size_t c = 0; c < k; ++c) {
        const auto& comp = mix.components[c];
        if (comp.mean.size() != dim)
            throw std::invalid_argument("gm_denoiser: dimension mismatch");
        double lw = std::log(comp.weight);
        for (size_t d = 0; d < dim; ++d) {
            double v = comp.var[d] + sigma * sigma;
            double r = z[d] - comp.mean[d];
            lw += -0.5 * (std::log(2.0 * M_PI * v) + r * r / v);
        }
        logw[c] = lw;
    }
    double mx = logw[0];
    for (double l : logw) mx = std::max(mx, l);
    double denom = 0.0;
    for (double& l : logw) {
        l = std::exp(l - mx);
        denom += l;
    }
    std::vector<double> out(dim, 0.0);
    for (size_t c = 0; c < k; ++c) {
        const auto& comp = mix.components[c];
        double w = logw[c] / denom;
        for (size_t d = 0; d < dim; ++d) {
            double gain = comp.var[d] / (comp.var[d] + sigma * sigma);
            out[d] += w * (comp.mean[d] + gain * (z[d] - comp.mean[d]));
        }
    }
    return out;
}

// ----- trainable denoiser network -----

struct DenoiserConfig {
    int latent_size = 0;
    int map_embed_size = 0;
    int hidden = 256;
    static constexpr int kSigmaEmbed = 3;
};

struct DenoiserModel {
    DenoiserConfig cfg;
    NetSpec spec;
    std::vector<double> params;

    static DenoiserModel create(const DenoiserConfig& cfg, uint64_t seed) {
        DenoiserModel m;
        m.cfg = cfg;
        m.spec = NetSpec::dense({cfg.latent_size + cfg.map_embed_size + DenoiserConfig::kSigmaEmbed,
                                 cfg.hidden, cfg.hidden, cfg.latent_size},
                                Nonlinearity::kSmoothGated);
        std::mt19937_64 rng(seed);
        m.params = init_params(m.spec, rng);
        return m;
    }

    // Injective sigma encoding fed to the raw network.
    static std::array<double, DenoiserConfig::kSigmaEmbed> sigma_embedding(double sigma) {
        double l = 0.25 * std::log(sigma);
        return {l, std::sin(4.0 * l), std::cos(4.0 * l)};
    }

    std::vector<double> make_input(const std::vector<double>& z_scaled,
                                   const std::vector<double>& map_embed,
                                   double sigma) const {
        std::vector<double> input;
        input.reserve(z_scaled.size() + map_embed.size() + DenoiserConfig::kSigmaEmbed);
        input.insert(input.end(), z_scaled.begin(), z_scaled.end());
        input.insert(input.end(), map_embed.begin(), map_embed.end());
        for (double e : sigma_embedding(sigma)) input.push_back(e);
        return input;
    }
};

// M(z; m, sigma) = c_skip z + c_out * raw(c_in z; m, sigma).
inline std::vector<double> denoise_estimate(const DenoiserModel& model,
                                            const std::vector<double>& z,
                                            const std::vector<double>& map_embed,
                                            double sigma, double sigma_data) {
    if (static_cast<int>(z.size()) != model.cfg.latent_size ||
        static_cast<int>(map_embed.size()) != model.cfg.map_embed_size)
        throw std::invalid_argument("denoise_estimate: shape mismatch");
    EdmCoeffs c = edm_coeffs(sigma, sigma_data);
    std::vector<double> scaled(z.size());
    for (size_t i = 0; i < z.size(); ++i) scaled[i] = c.c_in * z[i];
    Tape tape = net_forward(model.spec, model.params, model.make_input(scaled, map_embed, sigma));
    const std::vector<double>& raw = net_output(tape);
    std::vector<double> out(z.size());
    for (size_t i = 0; i < z.size(); ++i) out[i] = c.c_skip * z[i] + c.c_out * raw[i];
    return out;
}

struct DiffusionLossResult {
    double total = 0.0;
    double l_z = 0.0;
    double l_y = 0.0;
    std::vector<double> grad;  // w.r.t. denoiser parameters only
};

// L_diff = L_z + beta_y * L_y with
//   L_z = lambda c_out^2 || raw(c_in z) - (z_hat - c_skip z)/c_out ||^2
//   L_y = L_rec(D(M(z), m), gt)   through the frozen decoder.
inline DiffusionLossResult diffusion_loss(const DenoiserModel& model,
                                          const std::vector<double>& z_clean,
                                          const std::vector<double>& map_embed,
                                          double sigma,
                                          const std::vector<double>& noise,
                                          const Autoencoder* frozen_ae,
                                          const std::vector<OrientedBox>* gts,
                                          double beta_y,
                                          double sigma_data,
                                          double latent_scale = 1.0) {
    size_t n = z_clean.size();
    if (noise.size() != n || static_cast<int>(n) != model.cfg.latent_size)
        throw std::invalid_argument("diffusion_loss: shape mismatch");
    EdmCoeffs c = edm_coeffs(sigma, sigma_data);

    std::vector<double> z(n), scaled(n), target(n);
    for (size_t i = 0; i < n; ++i) {
        z[i] = z_clean[i] + sigma * noise[i];
        scaled[i] = c.c_in * z[i];
        target[i] = (z_clean[i] - c.c_skip * z[i]) / c.c_out;
    }
    Tape tape = net_forward(model.spec, model.params, model.make_input(scaled, map_embed, sigma));
    const std::vector<double>& raw = net_output(tape);

    DiffusionLossResult r;
    std::vector<double> upstream(n, 0.0);
    double w = c.lambda * c.c_out * c.c_out;
    for (size_t i = 0; i < n; ++i) {
        double resid = raw[i] - target[i];
        r.l_z += w * resid * resid;
        upstream[i] = 2.0 * w * resid;
    }

    if (beta_y > 0.0) {
        if (!frozen_ae || !gts)
            throw std::invalid_argument("diffusion_loss: beta_y > 0 needs decoder and targets");
        // Denoised estimate, undone latent normalization, through the
        // frozen decoder; gradients return through c_out only.
        LatentGrid zl(frozen_ae->cfg.latent_channels,
                      frozen_ae->cfg.raster_px >> frozen_ae->cfg.downsampling,
                      frozen_ae->cfg.raster_px >> frozen_ae->cfg.downsampling);
        for (size_t i = 0; i < n; ++i)
            zl.values[i] = (c.c_skip * z[i] + c.c_out * raw[i]) * latent_scale;

        std::vector<double> dec_input;
        dec_input.reserve(n + map_embed.size());
        dec_input.insert(dec_input.end(), zl.values.begin(), zl.values.end());
        dec_input.insert(dec_input.end(), map_embed.begin(), map_embed.end());
        Tape dec_tape = net_forward(frozen_ae->decoder_spec, frozen_ae->decoder_params, dec_input);
        BoxGrid y(frozen_ae->cfg.grid_spec());
        y.data = net_output(dec_tape);
        DetectionLossResult det = detection_loss(y, *gts, frozen_ae->cfg.match);
        r.l_y = det.total;

        std::vector<double> dec_param_sink(frozen_ae->decoder_spec.param_count(), 0.0);
        std::vector<double> d_dec_input = net_gradient(
            frozen_ae->decoder_spec, frozen_ae->decoder_params, dec_tape, det.grad, dec_param_sink);
        for (size_t i = 0; i < n; ++i)
            upstream[i] += beta_y * d_dec_input[i] * latent_scale * c.c_out;
    }

    r.total = r.l_z + beta_y * r.l_y;
    r.grad.assign(model.spec.param_count(), 0.0);
    net_gradient(model.spec, model.params, tape, upstream, r.grad);
    return r;
}

}  // namespace scenediff

#pragma once

// Run configuration: a single JSON file validated on load. Unknown
// keys are rejected so a typo never silently falls back to a default.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "scenediff/autoencoder.hpp"
#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"

namespace scenediff {

struct TrainParams {
    double learning_rate = 1e-4;
    double lr_final = 0.0;  // > 0 enables cosine decay to this value over `steps`
    double weight_decay = 1e-5;
    int steps = 2000;
    int batch_size = 16;
    uint64_t seed = 1;

    // Learning rate at an absolute step index; constant unless lr_final
    // is set. Depends only on the index so resumed runs are identical.
    double lr_at(uint64_t step_index) const {
        if (lr_final <= 0.0 || steps <= 0) return learning_rate;
        double frac = std::min(static_cast<double>(step_index) / steps, 1.0);
        double w = 0.5 * (1.0 + std::cos(3.14159265358979312 * frac));
        return lr_final + (learning_rate - lr_final) * w;
    }
};

struct RunConfig {
    AutoencoderConfig ae;
    EDMConfig edm;
    int denoiser_hidden = 256;
    TrainParams ae_train{.learning_rate = 1e-4, .seed = 1};    // Adam
    TrainParams diff_train{.learning_rate = 3e-4, .seed = 2};  // AdamW
    std::string dataset_template = "straight-road";
    double dataset_density = 0.5;
    int dataset_count = 16;
    uint64_t dataset_seed = 7;
    double threshold = 0.9;

    void validate() const {
        if (!ae.raster_spec().valid()) throw ConfigError("config: bad raster spec");
        if (ae.raster_px % (1 << ae.downsampling) != 0)
            throw ConfigError("config: raster size not divisible by 2^downsampling");
        if (ae.raster_px % ae.encoder_pool != 0 || ae.raster_px % ae.map_pool != 0)
            throw ConfigError("config: raster size not divisible by pooling factor");
        if (ae.latent_channels <= 0 || ae.grid_size <= 0)
            throw ConfigError("config: latent/grid sizes must be positive");
        if (!ae.match.valid()) throw ConfigError("config: bad match weights");
        if (ae.beta_kl < 0.0) throw ConfigError("config: beta_kl must be >= 0");
        try {
            edm.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        if (!(threshold > 0.0 && threshold < 1.0))
            throw ConfigError("config: threshold must be in (0,1)");
        if (dataset_density < 0.0 || dataset_density > 1.0)
            throw ConfigError("config: density must be in [0,1]");
        for (const TrainParams* t : {&ae_train, &diff_train}) {
            if (t->learning_rate <= 0.0 || t->lr_final < 0.0 || t->weight_decay < 0.0 ||
                t->steps < 0 || t->batch_size <= 0)
                throw ConfigError("config: bad training parameters");
        }
        try {
            template_from_name(dataset_template);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    using detail::get_if;
    RunConfig c;
    detail::reject_unknown(j, {"raster", "autoencoder", "diffusion", "dataset", "threshold"},
                           "top level");
    if (j.contains("raster")) {
        const auto& r = j.at("raster");
        detail::reject_unknown(r, {"px", "extent_m"}, "raster");
        get_if(r, "px", c.ae.raster_px);
        get_if(r, "extent_m", c.ae.extent_m);
    }
    if (j.contains("autoencoder")) {
        const auto& a = j.at("autoencoder");
        detail::reject_unknown(
            a,
            {"downsampling", "latent_channels", "grid_size", "beta_kl", "encoder_hidden",
             "decoder_hidden", "encoder_pool", "map_pool", "match", "learning_rate",
             "lr_final", "weight_decay", "steps", "batch_size", "seed"},
            "autoencoder");
        get_if(a, "downsampling", c.ae.downsampling);
        get_if(a, "latent_channels", c.ae.latent_channels);
        get_if(a, "grid_size", c.ae.grid_size);
        get_if(a, "beta_kl", c.ae.beta_kl);
        get_if(a, "encoder_hidden", c.ae.encoder_hidden);
        get_if(a, "decoder_hidden", c.ae.decoder_hidden);
        get_if(a, "encoder_pool", c.ae.encoder_pool);
        get_if(a, "map_pool", c.ae.map_pool);
        if (a.contains("match")) {
            const auto& m = a.at("match");
            detail::reject_unknown(
                m, {"alpha_cls", "alpha_l1", "alpha_vert", "beta_cls", "beta_l1", "beta_vert"},
                "autoencoder.match");
            get_if(m, "alpha_cls", c.ae.match.alpha_cls);
            get_if(m, "alpha_l1", c.ae.match.alpha_l1);
            get_if(m, "alpha_vert", c.ae.match.alpha_vert);
            get_if(m, "beta_cls", c.ae.match.beta_cls);
            get_if(m, "beta_l1", c.ae.match.beta_l1);
            get_if(m, "beta_vert", c.ae.match.beta_vert);
        }
        get_if(a, "learning_rate", c.ae_train.learning_rate);
        get_if(a, "lr_final", c.ae_train.lr_final);
        get_if(a, "weight_decay", c.ae_train.weight_decay);
        get_if(a, "steps", c.ae_train.steps);
        get_if(a, "batch_size", c.ae_train.batch_size);
        get_if(a, "seed", c.ae_train.seed);
    }
    if (j.contains("diffusion")) {
        const auto& d = j.at("diffusion");
        detail::reject_unknown(
            d,
            {"p_mean", "p_std", "sigma_data", "sigma_min", "sigma_max", "rho", "sample_steps",
             "beta_y", "hidden", "learning_rate", "lr_final", "weight_decay", "steps",
             "batch_size", "seed"},
            "diffusion");
        get_if(d, "p_mean", c.edm.p_mean);
        get_if(d, "p_std", c.edm.p_std);
        get_if(d, "sigma_data", c.edm.sigma_data);
        get_if(d, "sigma_min", c.edm.sigma_min);
        get_if(d, "sigma_max", c.edm.sigma_max);
        get_if(d, "rho", c.edm.rho);
        get_if(d, "sample_steps", c.edm.steps);
        get_if(d, "beta_y", c.edm.beta_y);
        get_if(d, "hidden", c.denoiser_hidden);
        get_if(d, "learning_rate", c.diff_train.learning_rate);
        get_if(d, "lr_final", c.diff_train.lr_final);
        get_if(d, "weight_decay", c.diff_train.weight_decay);
        get_if(d, "steps", c.diff_train.steps);
        get_if(d, "batch_size", c.diff_train.batch_size);
        get_if(d, "seed", c.diff_train.seed);
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::reject_unknown(d, {"template", "density", "count", "seed"}, "dataset");
        get_if(d, "template", c.dataset_template);
        get_if(d, "density", c.dataset_density);
        get_if(d, "count", c.dataset_count);
        get_if(d, "seed", c.dataset_seed);
    }
    get_if(j, "threshold", c.threshold);
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

}  // namespace scenediff

#pragma once

// Conditional VAE: encoder E(x) -> (z_mu, z_sigma), reparameterized
// latent, and a map-conditioned decoder D(z; m) emitting a BoxGrid.
// The networks are dense MLPs over pooled rasters; map conditioning
// enters the decoder as a fixed average-pooled map embedding
// concatenated with the latent.

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "scenediff/detection.hpp"
#include "scenediff/diffnet.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/raster.hpp"

namespace scenediff {

struct LatentGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;
    // Present on encoder outputs.
    std::vector<double> mean;
    std::vector<double> std_dev;

    LatentGrid() = default;
    LatentGrid(int c, int h, int w)
        : channels(c), height(h), width(w),
          values(static_cast<size_t>(c) * h * w, 0.0) {}

    size_t size() const { return values.size(); }

    static LatentGrid for_raster(int raster_px, int downsampling, int latent_channels) {
        if (raster_px % (1 << downsampling) != 0)
            throw std::invalid_argument("LatentGrid: raster size not divisible by 2^f");
        int hw = raster_px >> downsampling;
        return LatentGrid(latent_channels, hw, hw);
    }
};

struct AutoencoderConfig {
    int raster_px = 64;
    double extent_m = 64.0;
    int downsampling = 3;    // f
    int latent_channels = 4; // C'
    int grid_size = 32;      // detection grid G
    int encoder_pool = 4;    // fixed pooling before the encoder MLP
    int encoder_hidden = 256;
    int decoder_hidden = 256;
    int map_pool = 8;        // fixed pooling for the map embedding
    double beta_kl = 1e-4;
    double log_std_clamp = 10.0;
    MatchWeights match;

    int latent_size() const {
        int hw = raster_px >> downsampling;
        return latent_channels * hw * hw;
    }
    int map_embed_size() const {
        int hw = raster_px / map_pool;
        return 3 * hw * hw;
    }
    int grid_values() const { return kCellChannels * grid_size * grid_size; }

    RasterSpec raster_spec() const {
        return {raster_px, raster_px, extent_m, {0.0, 0.0}};
    }
    RasterSpec grid_spec() const {
        return {grid_size, grid_size, extent_m, {0.0, 0.0}};
    }
};

namespace detail {

// Channel-wise average pooling of a planar raster into a flat vector.
inline std::vector<double> pool_raster(const Raster& r, int pool) {
    int h = r.spec.height_px / pool, w = r.spec.width_px / pool;
    std::vector<double> out(static_cast<size_t>(r.channels) * h * w, 0.0);
    double inv = 1.0 / (pool * pool);
    for (int ch = 0; ch < r.channels; ++ch)
        for (int row = 0; row < r.spec.height_px; ++row)
            for (int col = 0; col < r.spec.width_px; ++col)
                out[(static_cast<size_t>(ch) * h + row / pool) * w + col / pool] +=
                    r.at(ch, row, col) * inv;
    return out;
}

}  // namespace detail

struct Autoencoder {
    AutoencoderConfig cfg;
    NetSpec encoder_spec;
    NetSpec decoder_spec;
    std::vector<double> encoder_params;
    std::vector<double> decoder_params;

    static Autoencoder create(const AutoencoderConfig& cfg, uint64_t seed) {
        Autoencoder ae;
        ae.cfg = cfg;
        int pooled = 3 * (cfg.raster_px / cfg.encoder_pool) * (cfg.raster_px / cfg.encoder_pool);
        ae.encoder_spec = NetSpec::dense({pooled, cfg.encoder_hidden, 2 * cfg.latent_size()},
                                         Nonlinearity::kSmoothGated);
        ae.decoder_spec = NetSpec::dense(
            {cfg.latent_size() + cfg.map_embed_size(), cfg.decoder_hidden, cfg.grid_values()},
            Nonlinearity::kSmoothGated);
        std::mt19937_64 rng(seed);
        ae.encoder_params = init_params(ae.encoder_spec, rng);
        ae.decoder_params = init_params(ae.decoder_spec, rng);
        return ae;
    }

    std::vector<double> map_embedding(const MapRaster& m) const {
        if (m.spec.height_px != cfg.raster_px || m.channels != 3)
            throw std::invalid_argument("map_embedding: raster shape mismatch");
        return detail::pool_raster(m, cfg.map_pool);
    }

    LatentGrid encode(const AgentRaster& x) const {
        if (x.spec.height_px != cfg.raster_px || x.channels != 3)
            throw std::invalid_argument("encode: raster shape mismatch");
        std::vector<double> pooled = detail::pool_raster(x, cfg.encoder_pool);
        Tape tape = net_forward(encoder_spec, encoder_params, pooled);
        const std::vector<double>& out = net_output(tape);
        int n = cfg.latent_size();
        LatentGrid z = LatentGrid::for_raster(cfg.raster_px, cfg.downsampling, cfg.latent_channels);
        z.mean.assign(out.begin(), out.begin() + n);
        z.std_dev.resize(n);
        for (int i = 0; i < n; ++i) {
            double raw = std::clamp(out[n + i], -cfg.log_std_clamp, cfg.log_std_clamp);
            z.std_dev[i] = std::exp(raw);
        }
        z.values = z.mean;
        return z;
    }

    BoxGrid decode(const LatentGrid& z, const MapRaster& m) const {
        return decode_embedded(z, map_embedding(m));
    }

    BoxGrid decode_embedded(const LatentGrid& z, const std::vector<double>& map_embed) const {
        if (static_cast<int>(z.size()) != cfg.latent_size())
            throw std::invalid_argument("decode: latent shape mismatch");
        std::vector<double> input;
        input.reserve(z.size() + map_embed.size());
        input.insert(input.end(), z.values.begin(), z.values.end());
        input.insert(input.end(), map_embed.begin(), map_embed.end());
        Tape tape = net_forward(decoder_spec, decoder_params, input);
        BoxGrid y(cfg.grid_spec());
        y.data = net_output(tape);
        return y;
    }
};

inline LatentGrid reparameterize(const std::vector<double>& mean,
                                 const std::vector<double>& std_dev,
                                 const std::vector<double>& noise, int channels,
                                 int height, int width) {
    if (mean.size() != std_dev.size() || mean.size() != noise.size() ||
        mean.size() != static_cast<size_t>(channels) * height * width)
        throw std::invalid_argument("reparameterize: shape mismatch");
    for (double s : std_dev)
        if (s <= 0.0) throw std::domain_error("reparameterize: std must be positive");
    LatentGrid z(channels, height, width);
    for (size_t i = 0; i < mean.size(); ++i)
        z.values[i] = mean[i] + std_dev[i] * noise[i];
    return z;
}

// D_KL[N(mu, sigma^2) || N(0, I)], summed over elements.
inline double kl_loss(const std::vector<double>& mean, const std::vector<double>& std_dev) {
    if (mean.size() != std_dev.size())
        throw std::invalid_argument("kl_loss: shape mismatch");
    double total = 0.0;
    for (size_t i = 0; i < mean.size(); ++i) {
        double s = std_dev[i];
        if (s <= 0.0) throw std::domain_error("kl_loss: std must be positive");
        total += 0.5 * (mean[i] * mean[i] + s * s - 1.0 - 2.0 * std::log(s));
    }
    return total;
}

struct ThresholdStats {
    int skipped_degenerate = 0;
};

// Decode every cell at or above the probability threshold; no NMS.
inline std::vector<OrientedBox> threshold_boxes(const BoxGrid& y, double p_min,
                                                ThresholdStats* stats = nullptr) {
    if (!(p_min > 0.0 && p_min < 1.0))
        throw std::invalid_argument("threshold_boxes: p_min must be in (0,1)");
    std::vector<OrientedBox> boxes;
    for (int i = 0; i < y.cell_count(); ++i) {
        if (sigmoid(y.channel(0, i)) < p_min) continue;
        if (y.cell_degenerate(i)) {
            if (stats) stats->skipped_degenerate += 1;
            continue;
        }
        boxes.push_back(decode_cell(y.cell_params(i)));
    }
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const OrientedBox& a, const OrientedBox& b) {
                         return a.probability > b.probability;
                     });
    return boxes;
}

struct VaeLossResult {
    double total = 0.0;
    double rec = 0.0;
    double kl = 0.0;
    std::vector<double> encoder_grad;
    std::vector<double> decoder_grad;
};

// Full forward/backward for one scene: L_VAE = L_rec + beta_KL * L_KL,
// with gradients for both networks. noise drives the reparameterization.
inline VaeLossResult vae_loss(const Autoencoder& ae, const AgentRaster& x,
                              const std::vector<double>& map_embed,
                              const std::vector<OrientedBox>& gts,
                              const std::vector<double>& noise) {
    const AutoencoderConfig& cfg = ae.cfg;
    int n = cfg.latent_size();
    if (static_cast<int>(noise.size()) != n)
        throw std::invalid_argument("vae_loss: noise shape mismatch");

    std::vector<double> pooled = detail::pool_raster(x, cfg.encoder_pool);
    Tape enc_tape = net_forward(ae.encoder_spec, ae.encoder_params, pooled);
    const std::vector<double>& enc_out = net_output(enc_tape);

    std::vector<double> mean(enc_out.begin(), enc_out.begin() + n);
    std::vector<double> raw(enc_out.begin() + n, enc_out.end());
    std::vector<double> std_dev(n);
    std::vector<char> clamped(n);
    for (int i = 0; i < n; ++i) {
        double r = raw[i];
        clamped[i] = r < -cfg.log_std_clamp || r > cfg.log_std_clamp;
        std_dev[i] = std::exp(std::clamp(r, -cfg.log_std_clamp, cfg.log_std_clamp));
    }

    std::vector<double> dec_input;
    dec_input.reserve(n + map_embed.size());
    for (int i = 0; i < n; ++i) dec_input.push_back(mean[i] + std_dev[i] * noise[i]);
    dec_input.insert(dec_input.end(), map_embed.begin(), map_embed.end());
    Tape dec_tape = net_forward(ae.decoder_spec, ae.decoder_params, dec_input);

    BoxGrid y(cfg.grid_spec());
    y.data = net_output(dec_tape);
    DetectionLossResult det = detection_loss(y, gts, cfg.match);

    VaeLossResult r;
    r.rec = det.total;
    r.kl = kl_loss(mean, std_dev);
    r.total = r.rec + cfg.beta_kl * r.kl;

    r.decoder_grad.assign(ae.decoder_spec.param_count(), 0.0);
    std::vector<double> d_dec_input = net_gradient(ae.decoder_spec, ae.decoder_params,
                                                   dec_tape, det.grad, r.decoder_grad);

    // Upstream for the encoder: [d/d mean ; d/d raw_log_std], combining
    // the reconstruction path through z with the KL term.
    std::vector<double> enc_upstream(2 * n, 0.0);
    for (int i = 0; i < n; ++i) {
        double dz = d_dec_input[i];
        enc_upstream[i] = dz + cfg.beta_kl * mean[i];
        double draw = dz * noise[i] * std_dev[i] +
                      cfg.beta_kl * (std_dev[i] * std_dev[i] - 1.0);
        enc_upstream[n + i] = clamped[i] ? 0.0 : draw;
    }
    r.encoder_grad.assign(ae.encoder_spec.param_count(), 0.0);
    net_gradient(ae.encoder_spec, ae.encoder_params, enc_tape, enc_upstream, r.encoder_grad);
    return r;
}

}  // namespace scenediff

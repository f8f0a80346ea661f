#pragma once

// Training, sampling, and evaluation drivers shared by the CLI verbs.
//
// Per-step randomness is derived from (seed, step) rather than one
// long-lived generator, so resuming from a checkpoint reproduces an
// uninterrupted run bit-for-bit.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "scenediff/autoencoder.hpp"
#include "scenediff/checkpoint.hpp"
#include "scenediff/config.hpp"
#include "scenediff/dataset_io.hpp"
#include "scenediff/diffusion.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/metrics.hpp"

namespace scenediff {

namespace detail {

// splitmix64; decorrelates (seed, step) pairs into stream seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Runs fn(i) for i in [0, n); results must be written to disjoint
// slots so the reduction order stays deterministic.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    int workers = std::min(threads, n);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

inline void add_scaled(std::vector<double>& acc, const std::vector<double>& g, double s) {
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += s * g[i];
}

}  // namespace detail

struct DatasetCache {
    std::vector<Scene> scenes;
    std::vector<AgentRaster> agent_rasters;
    std::vector<std::vector<double>> map_embeds;

    static DatasetCache build(const std::vector<Scene>& scenes, const Autoencoder& ae) {
        DatasetCache c;
        c.scenes = scenes;
        RasterSpec spec = ae.cfg.raster_spec();
        for (const auto& s : scenes) {
            c.agent_rasters.push_back(rasterize_agents(s, spec));
            c.map_embeds.push_back(ae.map_embedding(rasterize_map(s, spec)));
        }
        return c;
    }
};

inline std::vector<Scene> synth_dataset(const RunConfig& cfg, int count) {
    SceneTemplate tmpl = template_from_name(cfg.dataset_template);
    std::vector<Scene> scenes;
    scenes.reserve(count);
    for (int i = 0; i < count; ++i)
        scenes.push_back(synth_scene(cfg.dataset_seed + i, tmpl, cfg.dataset_density));
    return scenes;
}

using TrainLogFn = std::function<void(const std::string&)>;

struct TrainedAutoencoder {
    Autoencoder ae;
    OptimState opt;
    uint64_t step = 0;
};

inline CheckpointFile autoencoder_checkpoint(const TrainedAutoencoder& t,
                                             const std::string& config_snapshot) {
    CheckpointFile c;
    c.module = "autoencoder";
    c.step = t.step;
    c.config_snapshot = config_snapshot;
    c.arrays["encoder_params"] = t.ae.encoder_params;
    c.arrays["decoder_params"] = t.ae.decoder_params;
    c.arrays["opt_m"] = t.opt.m;
    c.arrays["opt_v"] = t.opt.v;
    c.arrays["opt_step"] = {static_cast<double>(t.opt.step)};
    return c;
}

inline TrainedAutoencoder autoencoder_from_checkpoint(const CheckpointFile& c,
                                                      const RunConfig& cfg) {
    if (c.module != "autoencoder") throw DataError("checkpoint: not an autoencoder checkpoint");
    TrainedAutoencoder t;
    t.ae = Autoencoder::create(cfg.ae, cfg.ae_train.seed);
    if (c.array("encoder_params").size() != t.ae.encoder_params.size() ||
        c.array("decoder_params").size() != t.ae.decoder_params.size())
        throw DataError("checkpoint: autoencoder shape mismatch with config");
    t.ae.encoder_params = c.array("encoder_params");
    t.ae.decoder_params = c.array("decoder_params");
    size_t n = t.ae.encoder_params.size() + t.ae.decoder_params.size();
    t.opt = OptimState::adam(n, cfg.ae_train.learning_rate, cfg.ae_train.weight_decay);
    t.opt.m = c.array("opt_m");
    t.opt.v = c.array("opt_v");
    t.opt.step = static_cast<int64_t>(c.array("opt_step").at(0));
    t.step = c.step;
    return t;
}

// Train (or continue training) the VAE. Adam over the concatenated
// encoder/decoder parameter vector.
inline void train_autoencoder(TrainedAutoencoder& t, const DatasetCache& data,
                              const RunConfig& cfg, int steps, int threads,
                              const TrainLogFn& log = {}) {
    Autoencoder& ae = t.ae;
    size_t ne = ae.encoder_params.size(), nd = ae.decoder_params.size();
    if (t.opt.m.empty())
        t.opt = OptimState::adam(ne + nd, cfg.ae_train.learning_rate,
                                 cfg.ae_train.weight_decay);
    int n_scenes = static_cast<int>(data.scenes.size());
    if (n_scenes == 0) throw DataError("train_autoencoder: empty dataset");
    int batch = std::min(cfg.ae_train.batch_size, n_scenes);
    int latent = ae.cfg.latent_size();

    for (int s = 0; s < steps; ++s) {
        uint64_t step_index = t.step + s;
        t.opt.lr = cfg.ae_train.lr_at(step_index);
        std::mt19937_64 step_rng(detail::mix_seed(cfg.ae_train.seed, step_index));
        std::vector<int> idx(batch);
        std::vector<std::vector<double>> eps(batch, std::vector<double>(latent));
        {
            std::normal_distribution<double> nrm(0.0, 1.0);
            std::uniform_int_distribution<int> pick(0, n_scenes - 1);
            for (int b = 0; b < batch; ++b) {
                idx[b] = batch >= n_scenes ? b : pick(step_rng);
                for (double& e : eps[b]) e = nrm(step_rng);
            }
        }
        std::vector<VaeLossResult> results(batch);
        detail::parallel_for(batch, threads, [&](int b) {
            int i = idx[b];
            results[b] = vae_loss(ae, data.agent_rasters[i], data.map_embeds[i],
                                  data.scenes[i].agents, eps[b]);
        });
        std::vector<double> grad(ne + nd, 0.0);
        double rec = 0.0, kl = 0.0, total = 0.0;
        double inv = 1.0 / batch;
        for (int b = 0; b < batch; ++b) {
            rec += inv * results[b].rec;
            kl += inv * results[b].kl;
            total += inv * results[b].total;
            for (size_t k = 0; k < ne; ++k) grad[k] += inv * results[b].encoder_grad[k];
            for (size_t k = 0; k < nd; ++k) grad[ne + k] += inv * results[b].decoder_grad[k];
        }
        if (!std::isfinite(total))
            throw DivergenceError("train_autoencoder: non-finite loss at step " +
                                  std::to_string(step_index));
        std::vector<double> params(ne + nd);
        std::copy(ae.encoder_params.begin(), ae.encoder_params.end(), params.begin());
        std::copy(ae.decoder_params.begin(), ae.decoder_params.end(), params.begin() + ne);
        opt_step(t.opt, params, grad);
        std::copy(params.begin(), params.begin() + ne, ae.encoder_params.begin());
        std::copy(params.begin() + ne, params.end(), ae.decoder_params.begin());

        if (log) {
            std::ostringstream os;
            os << "step=" << step_index << " rec=" << rec << " kl=" << kl
               << " total=" << total;
            log(os.str());
        }
    }
    t.step += steps;
}

struct TrainedDenoiser {
    DenoiserModel model;
    OptimState opt;
    uint64_t step = 0;
    double latent_scale = 1.0;  // raw latent = normalized latent * scale
    double ae_checksum = 0.0;   // frozen-autoencoder compatibility tag
};

inline double param_checksum(const Autoencoder& ae) {
    double s = 0.0;
    for (double p : ae.encoder_params) s += p;
    for (double p : ae.decoder_params) s += p;
    return s;
}

inline CheckpointFile denoiser_checkpoint(const TrainedDenoiser& t,
                                          const std::string& config_snapshot) {
    CheckpointFile c;
    c.module = "denoiser";
    c.step = t.step;
    c.config_snapshot = config_snapshot;
    c.arrays["params"] = t.model.params;
    c.arrays["opt_m"] = t.opt.m;
    c.arrays["opt_v"] = t.opt.v;
    c.arrays["opt_step"] = {static_cast<double>(t.opt.step)};
    c.arrays["latent_scale"] = {t.latent_scale};
    c.arrays["ae_checksum"] = {t.ae_checksum};
    return c;
}

inline TrainedDenoiser denoiser_from_checkpoint(const CheckpointFile& c, const RunConfig& cfg) {
    if (c.module != "denoiser") throw DataError("checkpoint: not a denoiser checkpoint");
    TrainedDenoiser t;
    DenoiserConfig dc;
    dc.latent_size = cfg.ae.latent_size();
    dc.map_embed_size = cfg.ae.map_embed_size();
    dc.hidden = cfg.denoiser_hidden;
    t.model = DenoiserModel::create(dc, cfg.diff_train.seed);
    if (c.array("params").size() != t.model.params.size())
        throw DataError("checkpoint: denoiser shape mismatch with config");
    t.model.params = c.array("params");
    t.opt = OptimState::adamw(t.model.params.size(), cfg.diff_train.learning_rate,
                              cfg.diff_train.weight_decay);
    t.opt.m = c.array("opt_m");
    t.opt.v = c.array("opt_v");
    t.opt.step = static_cast<int64_t>(c.array("opt_step").at(0));
    t.step = c.step;
    t.latent_scale = c.array("latent_scale").at(0);
    t.ae_checksum = c.array("ae_checksum").at(0);
    return t;
}

// Clean training latents: encoder means, normalized so their standard
// deviation matches sigma_data (the usual latent-diffusion rescaling).
struct LatentCache {
    std::vector<std::vector<double>> latents;  // normalized
    double scale = 1.0;                        // raw = normalized * scale

    static LatentCache build(const Autoencoder& ae, const DatasetCache& data,
                             double sigma_data) {
        LatentCache c;
        double sq = 0.0;
        size_t count = 0;
        for (const auto& x : data.agent_rasters) {
            LatentGrid z = ae.encode(x);
            for (double v : z.mean) sq += v * v;
            count += z.mean.size();
            c.latents.push_back(std::move(z.mean));
        }
        double std_dev = std::sqrt(sq / std::max<size_t>(count, 1));
        c.scale = std::max(std_dev, 1e-6) / sigma_data;
        for (auto& z : c.latents)
            for (double& v : z) v /= c.scale;
        return c;
    }
};

inline void train_diffusion(TrainedDenoiser& t, const Autoencoder& frozen_ae,
                            const DatasetCache& data, const LatentCache& latents,
                            const RunConfig& cfg, int steps, int threads,
                            const TrainLogFn& log = {}) {
    if (t.opt.m.empty())
        t.opt = OptimState::adamw(t.model.params.size(), cfg.diff_train.learning_rate,
                                  cfg.diff_train.weight_decay);
    int n_scenes = static_cast<int>(data.scenes.size());
    if (n_scenes == 0) throw DataError("train_diffusion: empty dataset");
    int batch = std::min(cfg.diff_train.batch_size, n_scenes);
    int latent = t.model.cfg.latent_size;

    for (int s = 0; s < steps; ++s) {
        uint64_t step_index = t.step + s;
        t.opt.lr = cfg.diff_train.lr_at(step_index);
        std::mt19937_64 step_rng(detail::mix_seed(cfg.diff_train.seed, step_index));
        std::vector<int> idx(batch);
        std::vector<double> sigmas(batch);
        std::vector<std::vector<double>> eps(batch, std::vector<double>(latent));
        {
            std::normal_distribution<double> nrm(0.0, 1.0);
            std::uniform_int_distribution<int> pick(0, n_scenes - 1);
            for (int b = 0; b < batch; ++b) {
                idx[b] = batch >= n_scenes ? b : pick(step_rng);
                sigmas[b] = sample_sigma(step_rng, cfg.edm.p_mean, cfg.edm.p_std);
                for (double& e : eps[b]) e = nrm(step_rng);
            }
        }
        std::vector<DiffusionLossResult> results(batch);
        detail::parallel_for(batch, threads, [&](int b) {
            int i = idx[b];
            results[b] = diffusion_loss(t.model, latents.latents[i], data.map_embeds[i],
                                        sigmas[b], eps[b], &frozen_ae,
                                        &data.scenes[i].agents, cfg.edm.beta_y,
                                        cfg.edm.sigma_data, latents.scale);
        });
        std::vector<double> grad(t.model.params.size(), 0.0);
        double lz = 0.0, ly = 0.0, total = 0.0;
        double inv = 1.0 / batch;
        for (int b = 0; b < batch; ++b) {
            lz += inv * results[b].l_z;
            ly += inv * results[b].l_y;
            total += inv * results[b].total;
            detail::add_scaled(grad, results[b].grad, inv);
        }
        if (!std::isfinite(total))
            throw DivergenceError("train_diffusion: non-finite loss at step " +
                                  std::to_string(step_index));
        opt_step(t.opt, t.model.params, grad);
        if (log) {
            std::ostringstream os;
            os << "step=" << step_index << " lz=" << lz << " ly=" << ly << " total=" << total;
            log(os.str());
        }
    }
    t.step += steps;
    t.latent_scale = latents.scale;
    t.ae_checksum = param_checksum(frozen_ae);
}

// Draw an initial latent, integrate the probability-flow ODE, decode,
// and threshold into a scene on the given map.
inline Scene sample_scene(const Autoencoder& ae, const DenoiserModel& model,
                          double latent_scale, double sigma_data, const EDMConfig& edm,
                          const Scene& map_scene, double threshold, uint64_t seed,
                          ThresholdStats* stats = nullptr) {
    std::vector<double> map_embed =
        ae.map_embedding(rasterize_map(map_scene, ae.cfg.raster_spec()));
    DenoiserFn fn = [&](const std::vector<double>& z, double sigma) {
        return denoise_estimate(model, z, map_embed, sigma, sigma_data);
    };
    std::mt19937_64 rng(seed);
    std::vector<double> z = ode_sample(fn, edm, ae.cfg.latent_size(), rng);

    LatentGrid zl = LatentGrid::for_raster(ae.cfg.raster_px, ae.cfg.downsampling,
                                           ae.cfg.latent_channels);
    for (size_t i = 0; i < z.size(); ++i) zl.values[i] = z[i] * latent_scale;
    BoxGrid y = ae.decode_embedded(zl, map_embed);

    Scene out;
    out.map = map_scene.map;
    out.region_tag = map_scene.region_tag;
    // Keep the map's identity so eval can pair generated scenes with
    // their reference by (region, seed); `seed` only drives the rng.
    out.seed = map_scene.seed;
    out.agents = threshold_boxes(y, threshold, stats);
    return out;
}

// ----- evaluation -----

struct EvalReport {
    struct Row {
        std::string region;
        double position_mmd2 = 0.0;
        double heading_mmd2 = 0.0;
        int pairs_used = 0;
        int pairs_skipped = 0;
    };
    std::vector<Row> per_region;
    Row overall;
    SceneStats mean_stats;  // averaged over generated scenes
};

// Pair generated and reference scenes by (region_tag, seed); each pair
// shares its map location.
inline EvalReport evaluate_datasets(const std::vector<Scene>& generated,
                                    const std::vector<Scene>& reference) {
    std::map<std::pair<std::string, uint64_t>, const Scene*> ref_by_key;
    for (const auto& r : reference) ref_by_key[{r.region_tag, r.seed}] = &r;

    std::map<std::string, std::vector<std::pair<SceneSample, SceneSample>>> by_region;
    std::vector<std::pair<SceneSample, SceneSample>> all;
    std::vector<std::string> unmatched;
    for (const auto& g : generated) {
        auto it = ref_by_key.find({g.region_tag, g.seed});
        if (it == ref_by_key.end()) {
            unmatched.push_back(g.region_tag + "/" + std::to_string(g.seed));
            continue;
        }
        auto pair = std::make_pair(SceneSample::from_boxes(g.agents),
                                   SceneSample::from_boxes(it->second->agents));
        by_region[g.region_tag].push_back(pair);
        all.push_back(std::move(pair));
    }
    if (!unmatched.empty()) {
        std::string msg = "eval: unmatched generated scenes:";
        for (const auto& u : unmatched) msg += " " + u;
        throw DataError(msg);
    }
    if (all.empty()) throw DataError("eval: no scene pairs to evaluate");

    EvalReport report;
    auto fill = [](EvalReport::Row& row, const SceneMmdResult& r) {
        row.position_mmd2 = r.position;
        row.heading_mmd2 = r.heading;
        row.pairs_used = r.pairs_used;
        row.pairs_skipped = r.pairs_skipped;
    };
    for (const auto& [region, pairs] : by_region) {
        EvalReport::Row row;
        row.region = region;
        fill(row, scene_mmd(pairs));
        report.per_region.push_back(row);
    }
    report.overall.region = "overall";
    fill(report.overall, scene_mmd(all));

    double n = static_cast<double>(generated.size());
    for (const auto& g : generated) {
        SceneStats s = scene_stats(g);
        report.mean_stats.agent_count += s.agent_count;
        report.mean_stats.overlap_pairs += s.overlap_pairs;
        report.mean_stats.off_drivable_fraction += s.off_drivable_fraction / n;
        report.mean_stats.mean_nearest_neighbor_m += s.mean_nearest_neighbor_m / n;
    }
    return report;
}

}  // namespace scenediff

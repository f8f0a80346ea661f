// scenediff command-line tool: synth, train-ae, train-diff, sample,
// eval, render. Exit codes: 0 success, 2 config error, 3 data error,
// 4 numerical divergence.

#include <filesystem>
#include <fstream>
#ifdef __GLIBC__
#include <malloc.h>
#endif
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scenediff/pipeline.hpp"
#include "scenediff/svg.hpp"

namespace fs = std::filesystem;
using namespace scenediff;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

std::ofstream open_log(const std::string& ckpt_path) {
    std::string path = ckpt_path + ".log";
    std::ofstream log(path, std::ios::binary);
    if (!log) throw DataError("cannot open for writing: " + path);
    return log;
}

void cmd_synth(const RunConfig& cfg, int count, const std::string& out) {
    write_dataset(out, synth_dataset(cfg, count));
}

void cmd_train_ae(const RunConfig& cfg, const std::string& config_text,
                  const std::string& data_path, const std::string& resume,
                  const std::string& out, int threads) {
    DatasetCache data = DatasetCache::build(
        read_dataset(data_path), Autoencoder::create(cfg.ae, cfg.ae_train.seed));
    TrainedAutoencoder t;
    if (!resume.empty()) {
        t = autoencoder_from_checkpoint(read_checkpoint(resume), cfg);
    } else {
        t.ae = Autoencoder::create(cfg.ae, cfg.ae_train.seed);
    }
    std::ofstream log = open_log(out);
    train_autoencoder(t, data, cfg, cfg.ae_train.steps, threads,
                      [&](const std::string& line) { log << line << '\n'; });
    write_checkpoint(out, autoencoder_checkpoint(t, config_text));
}

void cmd_train_diff(const RunConfig& cfg, const std::string& config_text,
                    const std::string& data_path, const std::string& ae_path,
                    const std::string& resume, const std::string& out, int threads) {
    TrainedAutoencoder ae = autoencoder_from_checkpoint(read_checkpoint(ae_path), cfg);
    DatasetCache data = DatasetCache::build(read_dataset(data_path), ae.ae);
    LatentCache latents = LatentCache::build(ae.ae, data, cfg.edm.sigma_data);
    TrainedDenoiser t;
    if (!resume.empty()) {
        t = denoiser_from_checkpoint(read_checkpoint(resume), cfg);
        if (t.ae_checksum != param_checksum(ae.ae))
            throw DataError("train-diff: denoiser checkpoint was trained on a different autoencoder");
    } else {
        DenoiserConfig dc;
        dc.latent_size = cfg.ae.latent_size();
        dc.map_embed_size = cfg.ae.map_embed_size();
        dc.hidden = cfg.denoiser_hidden;
        t.model = DenoiserModel::create(dc, cfg.diff_train.seed);
    }
    std::ofstream log = open_log(out);
    train_diffusion(t, ae.ae, data, latents, cfg, cfg.diff_train.steps, threads,
                    [&](const std::string& line) { log << line << '\n'; });
    write_checkpoint(out, denoiser_checkpoint(t, config_text));
}

void cmd_sample(const RunConfig& cfg, const std::string& ae_path,
                const std::string& diff_path, const std::string& maps_path,
                int count, uint64_t seed, const std::string& out,
                const std::string& svg_dir) {
    TrainedAutoencoder ae = autoencoder_from_checkpoint(read_checkpoint(ae_path), cfg);
    TrainedDenoiser dn = denoiser_from_checkpoint(read_checkpoint(diff_path), cfg);
    if (dn.ae_checksum != param_checksum(ae.ae))
        throw DataError("sample: denoiser checkpoint does not match the autoencoder");
    std::vector<Scene> maps = read_dataset(maps_path);
    if (maps.empty()) throw DataError("sample: empty map source dataset");
    std::vector<Scene> generated;
    for (int i = 0; i < count; ++i) {
        const Scene& map_scene = maps[i % maps.size()];
        Scene s = sample_scene(ae.ae, dn.model, dn.latent_scale, cfg.edm.sigma_data,
                               cfg.edm, map_scene, cfg.threshold, seed + i);
        if (!svg_dir.empty()) {
            fs::create_directories(svg_dir);
            write_file(svg_dir + "/scene_" + std::to_string(i) + ".svg",
                       render_scene_svg(s, cfg.ae.raster_spec()));
        }
        generated.push_back(std::move(s));
    }
    write_dataset(out, generated);
}

void cmd_eval(const RunConfig&, const std::vector<std::string>& generated_paths,
              const std::string& reference_path, const std::string& out) {
    std::vector<Scene> reference = read_dataset(reference_path);
    struct ModelRow {
        std::string name;
        EvalReport report;
    };
    std::vector<ModelRow> rows;
    for (const auto& path : generated_paths) {
        ModelRow row;
        row.name = fs::path(path).stem().string();
        row.report = evaluate_datasets(read_dataset(path), reference);
        rows.push_back(std::move(row));
    }

    std::vector<std::string> regions;
    for (const auto& r : rows.front().report.per_region) regions.push_back(r.region);

    std::ostringstream table;
    table << "MMD2 position\n";
    table << std::left << std::setw(24) << "model";
    for (const auto& r : regions) table << std::setw(16) << (r + " scenes");
    table << std::setw(16) << "overall" << '\n';
    for (const auto& row : rows) {
        table << std::setw(24) << row.name;
        for (const auto& region : regions) {
            double v = 0.0;
            for (const auto& rr : row.report.per_region)
                if (rr.region == region) v = rr.position_mmd2;
            table << std::setw(16) << v;
        }
        table << std::setw(16) << row.report.overall.position_mmd2 << '\n';
    }
    std::cout << table.str();

    std::ostringstream records;
    for (const auto& row : rows) {
        auto emit = [&](const EvalReport::Row& r) {
            records << "model=" << row.name << " region=" << r.region
                    << " pairs=" << r.pairs_used << " skipped=" << r.pairs_skipped
                    << " mmd2_pos=" << r.position_mmd2 << " mmd2_head=" << r.heading_mmd2
                    << '\n';
        };
        for (const auto& r : row.report.per_region) emit(r);
        emit(row.report.overall);
        records << "model=" << row.name
                << " stats overlap_pairs=" << row.report.mean_stats.overlap_pairs
                << " off_drivable=" << row.report.mean_stats.off_drivable_fraction
                << " mean_nn_m=" << row.report.mean_stats.mean_nearest_neighbor_m << '\n';
    }
    if (!out.empty()) write_file(out, records.str());
}

void cmd_render(const RunConfig& cfg, const std::string& data_path, const std::string& out_dir) {
    std::vector<Scene> scenes = read_dataset(data_path);
    fs::create_directories(out_dir);
    for (size_t i = 0; i < scenes.size(); ++i)
        write_file(out_dir + "/scene_" + std::to_string(i) + ".svg",
                   render_scene_svg(scenes[i], cfg.ae.raster_spec()));
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Training allocates multi-megabyte gradient buffers every step; with
    // default malloc tuning those go through mmap/munmap and the kernel
    // spends more time zeroing pages than we spend computing. Keep large
    // blocks on the heap instead.
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
    CLI::App app{"scenediff: map-conditioned traffic scene generation"};
    app.require_subcommand(1);

    std::string config_path, out, data_path, ae_path, diff_path, resume, svg_dir;
    std::string reference_path;
    std::vector<std::string> generated_paths;
    int count = 16;
    uint64_t seed = 0;
    int threads = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--threads", threads, "worker threads (1 = fully deterministic logs)");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene dataset");
    add_common(synth);
    synth->add_option("--out", out, "output dataset path")->required();
    synth->add_option("--count", count, "number of scenes");

    CLI::App* train_ae = app.add_subcommand("train-ae", "train the scene autoencoder");
    add_common(train_ae);
    train_ae->add_option("--data", data_path, "training dataset")->required();
    train_ae->add_option("--out", out, "output checkpoint path")->required();
    train_ae->add_option("--resume", resume, "checkpoint to continue from");

    CLI::App* train_diff = app.add_subcommand("train-diff", "train the latent diffusion model");
    add_common(train_diff);
    train_diff->add_option("--data", data_path, "training dataset")->required();
    train_diff->add_option("--ae", ae_path, "frozen autoencoder checkpoint")->required();
    train_diff->add_option("--out", out, "output checkpoint path")->required();
    train_diff->add_option("--resume", resume, "checkpoint to continue from");

    CLI::App* sample = app.add_subcommand("sample", "generate scenes from a trained model");
    add_common(sample);
    sample->add_option("--ae", ae_path, "autoencoder checkpoint")->required();
    sample->add_option("--diff", diff_path, "denoiser checkpoint")->required();
    sample->add_option("--maps", data_path, "dataset providing map locations")->required();
    sample->add_option("--out", out, "output dataset path")->required();
    sample->add_option("--count", count, "number of scenes to sample");
    sample->add_option("--seed", seed, "base sampling seed");
    sample->add_option("--svg-dir", svg_dir, "also render each scene as SVG here");

    CLI::App* eval = app.add_subcommand("eval", "MMD2 evaluation against a reference dataset");
    add_common(eval);
    eval->add_option("--generated", generated_paths, "generated dataset(s), one row each")
        ->required();
    eval->add_option("--reference", reference_path, "reference dataset")->required();
    eval->add_option("--out", out, "machine-readable report path");

    CLI::App* render = app.add_subcommand("render", "render a dataset to SVG files");
    add_common(render);
    render->add_option("--data", data_path, "dataset to render")->required();
    render->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = load_config(config_path);
        std::string config_text = read_file(config_path);
        if (synth->parsed()) cmd_synth(cfg, count, out);
        if (train_ae->parsed())
            cmd_train_ae(cfg, config_text, data_path, resume, out, threads);
        if (train_diff->parsed())
            cmd_train_diff(cfg, config_text, data_path, ae_path, resume, out, threads);
        if (sample->parsed())
            cmd_sample(cfg, ae_path, diff_path, data_path, count, seed, out, svg_dir);
        if (eval->parsed()) cmd_eval(cfg, generated_paths, reference_path, out);
        if (render->parsed()) cmd_render(cfg, data_path, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

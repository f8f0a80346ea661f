#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "scenediff/checkpoint.hpp"
#include "scenediff/config.hpp"
#include "scenediff/dataset_io.hpp"

using namespace scenediff;

namespace {

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TmpFile {
    std::string path;
    explicit TmpFile(const char* name) : path(tmp_path(name)) {}
    ~TmpFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("dataset write/read/write is byte identical") {
    std::vector<Scene> scenes;
    for (uint64_t s = 0; s < 8; ++s)
        scenes.push_back(synth_scene(s, SceneTemplate::kIntersection, 0.7));
    scenes.push_back(synth_scene(101, SceneTemplate::kParkingRow, 0.9));
    scenes.push_back(synth_scene(5, SceneTemplate::kStraightRoad, 0.0));

    TmpFile a("sd_ds_a.txt"), b("sd_ds_b.txt");
    write_dataset(a.path, scenes);
    std::vector<Scene> loaded = read_dataset(a.path);
    REQUIRE(loaded.size() == scenes.size());
    write_dataset(b.path, loaded);
    CHECK(slurp(a.path) == slurp(b.path));

    for (size_t i = 0; i < scenes.size(); ++i) {
        CHECK(loaded[i].region_tag == scenes[i].region_tag);
        CHECK(loaded[i].seed == scenes[i].seed);
        REQUIRE(loaded[i].agents.size() == scenes[i].agents.size());
        for (size_t j = 0; j < scenes[i].agents.size(); ++j) {
            CHECK(loaded[i].agents[j].center.x == scenes[i].agents[j].center.x);
            CHECK(loaded[i].agents[j].center.y == scenes[i].agents[j].center.y);
            CHECK(loaded[i].agents[j].heading == scenes[i].agents[j].heading);
            CHECK(loaded[i].agents[j].length == scenes[i].agents[j].length);
            CHECK(loaded[i].agents[j].width == scenes[i].agents[j].width);
        }
    }
}

TEST_CASE("dataset line survives awkward doubles exactly") {
    Scene s = synth_scene(1, SceneTemplate::kStraightRoad, 0.0);
    s.agents[0].center = {0.1, 1.0 / 3.0};
    s.agents[0].heading = -3.0303444212271987e-05;
    std::string line = scene_to_line(s);
    Scene back = scene_from_line(line);
    CHECK(back.agents[0].center.x == s.agents[0].center.x);
    CHECK(back.agents[0].center.y == s.agents[0].center.y);
    CHECK(back.agents[0].heading == s.agents[0].heading);
    CHECK(scene_to_line(back) == line);
}

TEST_CASE("dataset reader rejects malformed input") {
    TmpFile f("sd_ds_bad.txt");
    {
        std::ofstream out(f.path);
        out << "# wrong header\n";
    }
    CHECK_THROWS_AS(read_dataset(f.path), DataError);
    {
        std::ofstream out(f.path);
        out << kDatasetHeader << "\n";
        out << "region=straight-road seed=1 bogus=3 agents=\n";
    }
    CHECK_THROWS_AS(read_dataset(f.path), DataError);
    CHECK_THROWS_AS(read_dataset(tmp_path("sd_no_such_file.txt")), DataError);
}

TEST_CASE("empty dataset round-trips as header-only file") {
    TmpFile f("sd_ds_empty.txt");
    write_dataset(f.path, {});
    CHECK(slurp(f.path) == std::string(kDatasetHeader) + "\n");
    CHECK(read_dataset(f.path).empty());
}

TEST_CASE("checkpoint round-trip preserves everything bit for bit") {
    CheckpointFile ck;
    ck.module = "autoencoder";
    ck.step = 1234567890123ull;
    ck.config_snapshot = "{\"raster\":{\"px\":64}}";
    std::mt19937_64 rng(31);
    std::normal_distribution<double> nrm(0.0, 1.0);
    for (const char* name : {"encoder_params", "decoder_params", "opt_m", "opt_v"}) {
        std::vector<double> v(257);
        for (double& x : v) x = nrm(rng);
        ck.arrays[name] = v;
    }
    ck.arrays["opt_step"] = {42.0};
    ck.arrays["empty"] = {};

    TmpFile a("sd_ck_a.bin"), b("sd_ck_b.bin");
    write_checkpoint(a.path, ck);
    CheckpointFile back = read_checkpoint(a.path);
    CHECK(back.module == ck.module);
    CHECK(back.step == ck.step);
    CHECK(back.config_snapshot == ck.config_snapshot);
    REQUIRE(back.arrays.size() == ck.arrays.size());
    for (const auto& [name, v] : ck.arrays) {
        REQUIRE(back.has(name));
        CHECK(back.array(name) == v);
    }
    write_checkpoint(b.path, back);
    CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("checkpoint reader rejects corruption") {
    CHECK_THROWS_AS(read_checkpoint(tmp_path("sd_no_such.bin")), DataError);
    TmpFile f("sd_ck_bad.bin");
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_AS(read_checkpoint(f.path), DataError);

    CheckpointFile ck;
    ck.module = "denoiser";
    ck.arrays["params"] = {1.0, 2.0, 3.0};
    write_checkpoint(f.path, ck);
    std::string bytes = slurp(f.path);
    {
        std::ofstream out(f.path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    }
    CHECK_THROWS_AS(read_checkpoint(f.path), DataError);
}

TEST_CASE("config defaults parse and validate") {
    RunConfig c = parse_config(nlohmann::json::object());
    CHECK(c.ae.raster_px == 64);
    CHECK(c.ae.grid_size == 32);
    CHECK(c.ae.beta_kl == doctest::Approx(1e-4));
    CHECK(c.edm.sigma_data == doctest::Approx(0.5));
    CHECK(c.threshold == doctest::Approx(0.9));
}

TEST_CASE("config overrides land in the right fields") {
    nlohmann::json j = {
        {"raster", {{"px", 32}, {"extent_m", 32.0}}},
        {"autoencoder",
         {{"downsampling", 2},
          {"latent_channels", 2},
          {"grid_size", 16},
          {"beta_kl", 0.01},
          {"learning_rate", 0.001},
          {"match", {{"beta_cls", 10.0}}}}},
        {"diffusion", {{"sigma_max", 40.0}, {"hidden", 64}, {"steps", 500}}},
        {"dataset", {{"template", "intersection"}, {"count", 4}, {"seed", 9}}},
        {"threshold", 0.8},
    };
    RunConfig c = parse_config(j);
    CHECK(c.ae.raster_px == 32);
    CHECK(c.ae.extent_m == doctest::Approx(32.0));
    CHECK(c.ae.downsampling == 2);
    CHECK(c.ae.latent_channels == 2);
    CHECK(c.ae.grid_size == 16);
    CHECK(c.ae.match.beta_cls == doctest::Approx(10.0));
    CHECK(c.ae.match.alpha_cls == doctest::Approx(4.0));  // untouched default
    CHECK(c.ae_train.learning_rate == doctest::Approx(0.001));
    CHECK(c.edm.sigma_max == doctest::Approx(40.0));
    CHECK(c.denoiser_hidden == 64);
    CHECK(c.diff_train.steps == 500);
    CHECK(c.dataset_template == "intersection");
    CHECK(c.dataset_count == 4);
    CHECK(c.dataset_seed == 9);
    CHECK(c.threshold == doctest::Approx(0.8));
}

TEST_CASE("config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_config({{"thresold", 0.9}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"raster", {{"pixels", 64}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"autoencoder", {{"match", {{"gamma", 1.0}}}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"threshold", 1.5}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"raster", {{"px", 60}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"dataset", {{"template", "roundabout"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"dataset", {{"density", 1.5}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"diffusion", {{"sigma_min", -1.0}}}}), ConfigError);
}

TEST_CASE("load_config reports missing files and parse errors") {
    CHECK_THROWS_AS(load_config(tmp_path("sd_no_cfg.json")), ConfigError);
    TmpFile f("sd_cfg_bad.json");
    {
        std::ofstream out(f.path);
        out << "{ not json";
    }
    CHECK_THROWS_AS(load_config(f.path), ConfigError);
}

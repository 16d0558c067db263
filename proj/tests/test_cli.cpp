#include "doctest.h"

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>

#include "zerowm/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("zerowm_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ZEROWM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cli: unknown verbs and bad flags exit with status 2") {
    CHECK(run_cli("no-such-verb") == 2);
    CHECK(run_cli("distort --in a --out b --kind not_a_kind") == 2);
    CHECK(run_cli("register") == 2);  // missing required flags
}

TEST_CASE("cli: distort is deterministic byte for byte") {
    TempDir tmp("distort");
    zw::synth_dataset((tmp.path / "data").string(), 1, 3, false);
    const std::string in = (tmp.path / "data" / "img_000000.png").string();
    const std::string a = (tmp.path / "a.png").string();
    const std::string b = (tmp.path / "b.png").string();
    REQUIRE(run_cli("distort --kind jpeg --quality 50 --in " + in + " --out " + a) == 0);
    REQUIRE(run_cli("distort --kind jpeg --quality 50 --in " + in + " --out " + b) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(run_cli("distort --kind jpeg --quality 500 --in " + in + " --out " + a) == 2);
}

TEST_CASE("cli: register then extract recovers the registered payload") {
    TempDir tmp("roundtrip");
    const std::string data = (tmp.path / "data").string();
    zw::synth_dataset(data, 2, 9, false);
    std::ofstream cfg(tmp.path / "cfg.json");
    cfg << R"({"epochs":0,"batch_size":2,
        "fe":{"d_model":48,"heads":6,"depth":3,"mlp_ratio":2},
        "rec":{"encoder_channels":[4,6,8,10],"bottleneck":12}})";
    cfg.close();
    REQUIRE(run_cli("train-features --config " + (tmp.path / "cfg.json").string() + " --data " +
                    data + " --out " + (tmp.path / "run").string()) == 0);
    const std::string ckpt = (tmp.path / "run" / "ckpt_final").string();
    const std::string store = (tmp.path / "store").string();
    const std::string image = data + "/img_000000.png";

    const std::string cmd = std::string(ZEROWM_CLI_PATH) + " register --image " + image +
                            " --bits aabbccdd --k 30 --ckpt " + ckpt + " --store " + store +
                            " --seed 4 > " + (tmp.path / "reg.txt").string();
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const std::string reg_out = slurp(tmp.path / "reg.txt");
    const auto id_pos = reg_out.find("record_id: ");
    REQUIRE(id_pos != std::string::npos);
    const std::string record_id = reg_out.substr(id_pos + 11, 16);

    const std::string cmd2 = std::string(ZEROWM_CLI_PATH) + " extract --image " + image +
                             " --record " + record_id + " --ckpt " + ckpt + " --store " + store +
                             " > " + (tmp.path / "ext.txt").string();
    REQUIRE(WEXITSTATUS(std::system(cmd2.c_str())) == 0);
    const std::string ext_out = slurp(tmp.path / "ext.txt");
    CHECK(ext_out.find("bits: aabbccdc") != std::string::npos);  // 30 bits: last 2 padded out
    CHECK(ext_out.find("probs:") != std::string::npos);

    // Extraction knows nothing about unknown record ids.
    CHECK(run_cli("extract --image " + image + " --record ffffffffffffffff --ckpt " + ckpt +
                  " --store " + store) == 1);
}

TEST_CASE("cli: evaluate writes invariance reports") {
    TempDir tmp("eval");
    const std::string data = (tmp.path / "data").string();
    zw::synth_dataset(data, 3, 11, false);
    std::ofstream cfg(tmp.path / "cfg.json");
    cfg << R"({"epochs":0,"batch_size":2,
        "fe":{"d_model":24,"heads":3,"depth":2,"mlp_ratio":2},
        "rec":{"encoder_channels":[4,6,8,10],"bottleneck":12}})";
    cfg.close();
    REQUIRE(run_cli("train-features --config " + (tmp.path / "cfg.json").string() + " --data " +
                    data + " --out " + (tmp.path / "run").string()) == 0);
    // A two-cell custom grid keeps the sweep quick.
    std::ofstream grid(tmp.path / "grid.json");
    grid << R"([{"kind":"identity","params":{},"seed":0},
                {"kind":"gaussian_blur","params":{"sigma":1.5},"seed":1}])";
    grid.close();
    REQUIRE(run_cli("evaluate --ckpt " + (tmp.path / "run" / "ckpt_final").string() + " --data " +
                    data + " --distortion-grid " + (tmp.path / "grid.json").string() +
                    " --runs 2 --report " + (tmp.path / "report").string() +
                    " --plots --collapse 3") == 0);
    CHECK(fs::exists(tmp.path / "report" / "invariance.json"));
    CHECK(fs::exists(tmp.path / "report" / "invariance.csv"));
    CHECK(fs::exists(tmp.path / "report" / "summary.json"));
    CHECK(fs::exists(tmp.path / "report" / "invariance_cosine.png"));
    CHECK(fs::exists(tmp.path / "report" / "collapse_heatmap.png"));
}

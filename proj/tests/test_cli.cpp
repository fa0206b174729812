#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pgrecon/hash.hpp"
#include "pgrecon/tsk_io.hpp"
#include "support.hpp"

#ifdef PGRECON_CLI_PATH

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string output;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(PGRECON_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
    const int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

const char* kScene = R"({"height": 8, "width": 8, "channels": 24, "feature_channels": 2,
                         "coarse_height": 2, "coarse_width": 2, "correlation_length": 2, "p_day": 0.6})";

std::map<std::string, std::vector<std::uint8_t>> dir_contents(const fs::path& dir, const std::string& skip) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().filename() == skip) continue;
        out[e.path().filename().string()] = pgrecon::read_file(e.path());
    }
    return out;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth is reproducible and its manifests hash the files") {
    testing::TempDir dir;
    write(dir / "scene.json", kScene);
    const std::string base = "synth --config " + (dir / "scene.json").string() + " --seed 7 --out ";
    REQUIRE(run(base + (dir / "a").string()).code == 0);
    REQUIRE(run(base + (dir / "b").string()).code == 0);
    const auto a = dir_contents(dir / "a", "run.json");
    CHECK(a.size() == 16);
    CHECK(a == dir_contents(dir / "b", "run.json"));

    const auto run_json = read_json(dir / "a" / "run.json");
    CHECK(run_json["command"] == "synth");
    CHECK(run_json["seed"] == 7);
    CHECK(run_json["config"]["seed"] == 7);
    CHECK(run_json.contains("wall_time_s"));
    for (const auto& [name, entry] : run_json["outputs"].items()) {
        CHECK(entry["sha256"].get<std::string>() == pgrecon::sha256_file(entry["path"].get<std::string>()));
    }
    const auto manifest = read_json(dir / "a" / "manifest.json");
    for (const auto& [role, entry] : manifest["roles"].items()) {
        CHECK(entry["sha256"].get<std::string>() ==
              pgrecon::sha256_file(dir / "a" / entry["file"].get<std::string>()));
    }
}

TEST_CASE("config errors exit 1 and name the field") {
    testing::TempDir dir;
    write(dir / "missing.json", R"({"height": 8, "width": 8, "channels": 24, "feature_channels": 2,
                                     "coarse_height": 2})");
    auto r = run("synth --config " + (dir / "missing.json").string() + " --out " + (dir / "x").string());
    CHECK(r.code == 1);
    CHECK(r.output.find("coarse_width") != std::string::npos);

    write(dir / "broken.json", "{\"height\": 8,\n \"width\": }");
    r = run("synth --config " + (dir / "broken.json").string() + " --out " + (dir / "x").string());
    CHECK(r.code == 1);
    CHECK(r.output.find("line 2") != std::string::npos);

    CHECK(run("fit --model bogus --scene nowhere --out " + (dir / "x").string()).code == 1);
    CHECK(run("fit --lr -1 --scene nowhere --out " + (dir / "x").string()).code == 1);
    CHECK(run("fit --holdout 1.5 --scene nowhere --out " + (dir / "x").string()).code == 1);
    CHECK(run("frobnicate").code == 1);
    write(dir / "train.json", R"({"lr": 0.05, "learning_rate": 1})");
    r = run("fit --config " + (dir / "train.json").string() + " --scene nowhere --out " + (dir / "x").string());
    CHECK(r.code == 1);
    CHECK(r.output.find("learning_rate") != std::string::npos);
}

TEST_CASE("fit, reconstruct and evaluate") {
    testing::TempDir dir;
    write(dir / "scene.json", kScene);
    REQUIRE(run("synth --config " + (dir / "scene.json").string() + " --seed 3 --out " + (dir / "scene").string())
                .code == 0);
    const std::string scene = (dir / "scene").string();

    const std::string fit = "fit --scene " + scene + " --epochs 4 --base-width 2 --seed 5 --out ";
    REQUIRE(run(fit + (dir / "f1").string()).code == 0);
    REQUIRE(run(fit + (dir / "f2").string() + " --threads 2").code == 0);
    CHECK(pgrecon::read_file(dir / "f1" / "model.pgm") == pgrecon::read_file(dir / "f2" / "model.pgm"));
    CHECK(pgrecon::read_file(dir / "f1" / "model_loss.csv") == pgrecon::read_file(dir / "f2" / "model_loss.csv"));
    const auto cfg = read_json(dir / "f1" / "run.json")["config"];
    CHECK(cfg["model"] == "full");
    CHECK(cfg["epochs"] == 4);

    // defaults echo the training protocol
    const auto defaults = run("fit --scene " + scene + " --model atc --out " + (dir / "f3").string());
    REQUIRE(defaults.code == 0);
    const auto dcfg = read_json(dir / "f3" / "run.json")["config"];
    CHECK(dcfg["model"] == "atc");
    CHECK(dcfg["epochs"] == 500);
    CHECK(dcfg["lr"] == 0.1);
    CHECK(dcfg["holdout"] == 0.2);

    std::ifstream loss(dir / "f1" / "model_loss.csv");
    std::string line;
    int lines = 0;
    while (std::getline(loss, line)) ++lines;
    CHECK(lines == 1 + 1 + 4);

    REQUIRE(run("reconstruct --scene " + scene + " --checkpoint " + (dir / "f1" / "model.pgm").string() +
                " --images 0,5 --out " + (dir / "rec").string())
                .code == 0);
    const auto recon = pgrecon::read_tsk(dir / "rec" / "recon.tsk");
    CHECK(recon.same_shape(8, 8, 24));
    CHECK(fs::exists(dir / "rec" / "day_0005.pgm"));
    const auto img = pgrecon::read_file(dir / "rec" / "day_0000.pgm");
    CHECK(std::string(img.begin(), img.begin() + 2) == "P5");

    const auto ev = run("evaluate --scene " + scene + " --split " + (dir / "f1" / "split.tsk").string() +
                        " --checkpoint " + (dir / "f1" / "model.pgm").string() + " --out " + (dir / "ev").string());
    REQUIRE(ev.code == 0);
    const auto split = pgrecon::read_tsk(dir / "f1" / "split.tsk");
    std::size_t n_test = 0;
    for (float v : split.values()) n_test += v == 2.0f;
    CHECK(ev.output.find("test mae=") != std::string::npos);
    CHECK(ev.output.find("n=" + std::to_string(n_test) + "\n") != std::string::npos);
    CHECK(ev.output.find("insitu mae=") != std::string::npos);

    REQUIRE(run("baseline --scene " + scene + " --epochs 3 --base-width 2 --out " + (dir / "bl").string()).code == 0);
    std::vector<std::string> ckpts;
    for (const char* m : {"proposed", "atc-era5", "atc", "naive"}) ckpts.push_back((dir / "bl" / (std::string(m) + ".pgm")).string());
    std::string args = "evaluate --scene " + scene + " --split " + (dir / "bl" / "split.tsk").string();
    for (const auto& c : ckpts) args += " --checkpoint " + c;
    REQUIRE(run(args + " --out " + (dir / "ev4").string()).code == 0);
    std::ifstream table(dir / "ev4" / "table.csv");
    lines = 0;
    while (std::getline(table, line)) ++lines;
    CHECK(lines == 5);
}

TEST_CASE("data and numeric failures") {
    testing::TempDir dir;
    write(dir / "scene.json", kScene);
    REQUIRE(run("synth --config " + (dir / "scene.json").string() + " --out " + (dir / "scene").string()).code == 0);
    const std::string scene = (dir / "scene").string();

    CHECK(run("fit --scene " + (dir / "none").string() + " --out " + (dir / "o").string()).code == 2);
    CHECK(run("fit --scene " + scene + " --epochs 3 --inject-fault numeric --out " + (dir / "o").string()).code == 3);

    // truncated observation file
    auto obs = pgrecon::read_file(dir / "scene" / "obs.tsk");
    obs.resize(obs.size() - 5);
    fs::create_directories(dir / "cut");
    for (const auto& e : fs::directory_iterator(dir / "scene")) fs::copy(e.path(), dir / "cut" / e.path().filename());
    pgrecon::write_file_atomic(dir / "cut" / "obs.tsk", obs);
    const auto r = run("fit --scene " + (dir / "cut").string() + " --epochs 2 --out " + (dir / "o").string());
    CHECK(r.code == 2);
    CHECK(r.output.find("at byte") != std::string::npos);

    // checkpoint from a different grid
    write(dir / "other.json", R"({"height": 12, "width": 8, "channels": 24, "feature_channels": 2,
                                   "coarse_height": 2, "coarse_width": 2})");
    REQUIRE(run("synth --config " + (dir / "other.json").string() + " --out " + (dir / "other").string()).code == 0);
    REQUIRE(run("fit --scene " + scene + " --epochs 2 --model atc --out " + (dir / "f").string()).code == 0);
    CHECK(run("evaluate --scene " + (dir / "other").string() + " --split " + (dir / "f" / "split.tsk").string() +
              " --checkpoint " + (dir / "f" / "model.pgm").string() + " --out " + (dir / "e").string())
              .code == 2);
}

TEST_CASE("gradcheck exit status and fault injection") {
    const auto ok = run("gradcheck");
    CHECK(ok.code == 0);
    for (const char* g : {"a ", "b ", "phase ", "w ", "conv "}) CHECK(ok.output.find(g) != std::string::npos);
    const auto bad = run("gradcheck --inject-fault amp-sign");
    CHECK(bad.code == 3);
    CHECK(bad.output.find("failed for group w") != std::string::npos);
    CHECK(bad.output.find("failed for group conv") == std::string::npos);
}

}  // TEST_SUITE

#endif

// pgrecon: synthesize scenes, fit models, reconstruct, evaluate, self-check gradients.
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pgrecon/checkpoint.hpp"
#include "pgrecon/evaluate.hpp"
#include "pgrecon/gradcheck.hpp"
#include "pgrecon/grid.hpp"
#include "pgrecon/hash.hpp"
#include "pgrecon/synth.hpp"
#include "pgrecon/tsk_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace pgrecon;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
};

struct FitFlags {
    std::string scene;
    std::string model = "full";
    std::optional<int> epochs;
    std::optional<double> lr;
    std::optional<double> holdout;
    std::optional<bool> center;
    std::optional<int> base_width;
    std::vector<std::string> lr_group;
    std::string fault;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// Resolved training settings: config file values, then flags on top.
TrainConfig resolve_train_config(const Common& common, const FitFlags& flags) {
    TrainConfig cfg;
    if (!common.config.empty()) {
        const json j = read_json_file(common.config);
        if (!j.is_object()) throw ConfigError(common.config + ": config must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            try {
                if (key == "lr") cfg.lr = value.get<double>();
                else if (key == "epochs") cfg.epochs = value.get<int>();
                else if (key == "holdout") cfg.holdout = value.get<double>();
                else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
                else if (key == "center_driver") cfg.center_driver = value.get<bool>();
                else if (key == "base_width") cfg.base_width = value.get<int>();
                else if (key == "lr_override") {
                    for (const auto& [g, v] : value.items()) {
                        cfg.lr_override[static_cast<std::size_t>(parse_group(g))] = v.get<double>();
                    }
                } else {
                    throw ConfigError("unknown field '" + key + "'", key);
                }
            } catch (const json::exception& e) {
                throw ConfigError("field '" + key + "': " + e.what(), key);
            } catch (const PreconditionError& e) {
                throw ConfigError("field '" + key + "': " + e.what(), key);
            }
        }
    }
    if (common.seed) cfg.seed = *common.seed;
    if (flags.epochs) cfg.epochs = *flags.epochs;
    if (flags.lr) cfg.lr = *flags.lr;
    if (flags.holdout) cfg.holdout = *flags.holdout;
    if (flags.center) cfg.center_driver = *flags.center;
    if (flags.base_width) cfg.base_width = *flags.base_width;
    for (const auto& spec : flags.lr_group) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw ConfigError("--lr-group expects GROUP=LR, got '" + spec + "'");
        try {
            cfg.lr_override[static_cast<std::size_t>(parse_group(spec.substr(0, eq)))] = std::stod(spec.substr(eq + 1));
        } catch (const std::exception& e) {
            throw ConfigError("--lr-group " + spec + ": " + e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

json train_config_json(const TrainConfig& cfg, ModelKind kind) {
    json j;
    j["model"] = model_kind_name(kind);
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["holdout"] = cfg.holdout;
    j["seed"] = cfg.seed;
    j["center_driver"] = cfg.center_driver;
    j["base_width"] = cfg.base_width;
    j["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}};
    json over = json::object();
    for (int g = 0; g < kGroupCount; ++g) {
        if (cfg.lr_override[static_cast<std::size_t>(g)]) {
            over[group_name(static_cast<ParamGroup>(g))] = *cfg.lr_override[static_cast<std::size_t>(g)];
        }
    }
    j["lr_override"] = over;
    return j;
}

// Split record: 0 missing, 1 train, 2 test.
Tensor3 encode_split(const Split& s) {
    Tensor3 t(s.train.height(), s.train.width(), s.train.channels());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = s.train[k] ? 1.0f : (s.test[k] ? 2.0f : 0.0f);
    return t;
}

Split decode_split(const Tensor3& t) {
    Split s{Mask3(t.height(), t.width(), t.channels()), Mask3(t.height(), t.width(), t.channels())};
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] == 1.0f) s.train.set(k, true);
        else if (t[k] == 2.0f) s.test.set(k, true);
        else if (t[k] != 0.0f) throw LoadError("split record holds a value other than 0, 1, 2", 32 + 4 * k);
    }
    return s;
}

class RunManifest {
public:
    RunManifest(std::string command, fs::path out) : out_(std::move(out)), start_(std::chrono::steady_clock::now()) {
        j_["command"] = std::move(command);
    }
    json& config() { return j_["config"]; }
    void seed(std::uint64_t s) { j_["seed"] = s; }
    void input(const std::string& role, const fs::path& p) { j_["inputs"][role] = p.string(); }
    void output(const fs::path& file) { outputs_.push_back(file); }

    void write() {
        json outs = json::object();
        for (const auto& f : outputs_) outs[f.filename().string()] = {{"path", f.string()}, {"sha256", sha256_file(f)}};
        j_["outputs"] = outs;
        j_["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_text(out_ / "run.json", j_.dump(2) + "\n");
    }

private:
    fs::path out_;
    std::chrono::steady_clock::time_point start_;
    json j_;
    std::vector<fs::path> outputs_;
};

fs::path require_out(const Common& c) {
    if (c.out.empty()) throw ConfigError("--out is required", "out");
    fs::create_directories(c.out);
    return c.out;
}

int cmd_synth(const Common& common) {
    if (common.config.empty()) throw ConfigError("--config is required for synth", "config");
    std::ifstream in(common.config);
    if (!in) throw ConfigError("cannot open config file " + common.config);
    std::stringstream text;
    text << in.rdbuf();
    SynthConfig cfg;
    try {
        cfg = parse_synth_config(text.str());
    } catch (const ConfigError& e) {
        throw ConfigError(common.config + ": " + e.what(), e.field());
    }
    if (common.seed) cfg.seed = *common.seed;
    const fs::path out = require_out(common);
    const SynthScene scene = gen_scene(cfg);
    save_scene(out, scene);

    RunManifest m("synth", out);
    m.config() = json::parse(synth_config_json(cfg));
    m.seed(cfg.seed);
    m.input("config", common.config);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(out)) {
        if (e.path().filename() != "run.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) m.output(f);
    m.write();
    std::printf("scene %dx%dx%d written to %s\n", cfg.height, cfg.width, cfg.channels, out.string().c_str());
    return kOk;
}

// Steps this large overflow the parameters on the first update.
void inject_numeric_fault(TrainConfig& cfg) {
    cfg.lr = 1e38;
    cfg.lr_override = {};
}

struct Fitted {
    std::string method;
    ModelKind kind;
    FitResult result;
};

void write_loss_csv(const fs::path& path, const LossHistory& h) {
    std::string s = "epoch,train_loss,test_loss\n";
    char buf[96];
    auto row = [&](int epoch, double train, std::optional<double> test) {
        if (test) std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", epoch, train, *test);
        else std::snprintf(buf, sizeof buf, "%d,%.9g,\n", epoch, train);
        s += buf;
    };
    row(0, h.initial_train, h.initial_test);
    for (std::size_t e = 0; e < h.train.size(); ++e) {
        row(static_cast<int>(e + 1), h.train[e], h.test.empty() ? std::nullopt : std::optional<double>(h.test[e]));
    }
    write_text(path, s);
}

int cmd_fit(const Common& common, const FitFlags& flags, bool all_methods) {
    const ModelKind kind = [&] {
        try {
            return parse_model_kind(flags.model);
        } catch (const PreconditionError& e) {
            throw ConfigError(e.what(), "model");
        }
    }();
    TrainConfig cfg = resolve_train_config(common, flags);
    if (flags.fault == "numeric") inject_numeric_fault(cfg);
    if (flags.scene.empty()) throw ConfigError("--scene is required", "scene");
    const fs::path out = require_out(common);

    SynthScene scene = load_scene(flags.scene);
    const Split split = holdout_split(scene.mask(), cfg.holdout, cfg.seed);
    write_tsk(out / "split.tsk", encode_split(split));

    RunManifest m(all_methods ? "baseline" : "fit", out);
    m.config() = train_config_json(cfg, kind);
    if (all_methods) m.config()["model"] = "all";
    m.seed(cfg.seed);
    m.input("scene", flags.scene);
    m.output(out / "split.tsk");

    const FitData data{scene.obs, scene.times, scene.tc_fine, scene.features};
    std::vector<std::pair<std::string, ModelKind>> jobs;
    if (all_methods) {
        jobs = {{"proposed", ModelKind::full}, {"atc-era5", ModelKind::atc_era5}, {"atc", ModelKind::atc},
                {"naive", ModelKind::naive}};
    } else {
        jobs = {{model_kind_name(kind), kind}};
    }
    std::vector<MethodRow> rows;
    for (const auto& [name, k] : jobs) {
        const FitResult r = fit_model(k, data, split.train, cfg, &split.test);
        const std::string stem = all_methods ? name : "model";
        save_checkpoint(r.model, out / (stem + ".pgm"));
        write_loss_csv(out / (stem + "_loss.csv"), r.history);
        m.output(out / (stem + ".pgm"));
        m.output(out / (stem + "_loss.csv"));
        const Tensor3 pred = reconstruct(r.model, scene.times, scene.tc_fine, scene.features);
        rows.push_back({name, evaluate(pred, scene.obs, split.train, "train"),
                        evaluate(pred, scene.obs, split.test, "test")});
        std::printf("%-9s train_loss=%.4f test_loss=%.4f\n", name.c_str(), r.history.train.back(),
                    r.history.test.empty() ? NAN : r.history.test.back());
    }
    if (all_methods) {
        write_text(out / "table.csv", format_table(rows));
        m.output(out / "table.csv");
    }
    m.write();
    return kOk;
}

struct ReconFlags {
    std::string scene;
    std::string checkpoint;
    std::vector<int> image_days;
};

void write_pgm_image(const fs::path& path, const Tensor3& t, int c, float lo, float hi) {
    std::string header = "P5\n" + std::to_string(t.width()) + " " + std::to_string(t.height()) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    const float span = hi > lo ? hi - lo : 1.0f;
    for (float v : t.plane(c)) {
        const float s = std::clamp((v - lo) / span, 0.0f, 1.0f);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(255.0f * s)));
    }
    write_file_atomic(path, bytes);
}

int cmd_reconstruct(const Common& common, const ReconFlags& flags) {
    if (flags.scene.empty() || flags.checkpoint.empty()) throw ConfigError("--scene and --checkpoint are required");
    const fs::path out = require_out(common);
    const SynthScene scene = load_scene(flags.scene);
    const ModelState model = load_checkpoint(flags.checkpoint);
    const Tensor3 pred = reconstruct(model, scene.times, scene.tc_fine, scene.features);
    save_stack(out / "recon.tsk", pred, scene.times);

    RunManifest m("reconstruct", out);
    m.config() = {{"image_days", flags.image_days}};
    m.input("scene", flags.scene);
    m.input("checkpoint", flags.checkpoint);
    m.output(out / "recon.tsk");
    m.output(out / "recon.meta");
    if (!flags.image_days.empty()) {
        const auto [lo, hi] = std::minmax_element(pred.values().begin(), pred.values().end());
        for (int day : flags.image_days) {
            if (day < 0 || day >= pred.channels()) throw ConfigError("image day " + std::to_string(day) + " out of range");
            char name[32];
            std::snprintf(name, sizeof name, "day_%04d.pgm", day);
            write_pgm_image(out / name, pred, day, *lo, *hi);
            m.output(out / name);
        }
    }
    m.write();
    std::printf("reconstruction %dx%dx%d written to %s\n", pred.height(), pred.width(), pred.channels(),
                (out / "recon.tsk").string().c_str());
    return kOk;
}

struct EvalFlags {
    std::string scene;
    std::string split;
    std::vector<std::string> checkpoints;
};

int cmd_evaluate(const Common& common, const EvalFlags& flags) {
    if (flags.scene.empty() || flags.split.empty() || flags.checkpoints.empty()) {
        throw ConfigError("--scene, --split and at least one --checkpoint are required");
    }
    const fs::path out = require_out(common);
    const SynthScene scene = load_scene(flags.scene);
    const Split split = decode_split(read_tsk(flags.split));
    if (!split.train.same_shape(scene.obs)) throw PreconditionError("split record dims disagree with the scene");

    RunManifest m("evaluate", out);
    m.config() = json::object();
    m.input("scene", flags.scene);
    m.input("split", flags.split);
    std::string reports;
    std::vector<MethodRow> rows;
    const int pi = scene.cfg.probe_row(), pj = scene.cfg.probe_col();
    for (const auto& path : flags.checkpoints) {
        const ModelState model = load_checkpoint(path);
        if (model.height() != scene.obs.height() || model.width() != scene.obs.width() ||
            model.channels() != scene.obs.channels()) {
            throw PreconditionError("checkpoint " + path + " dims disagree with the scene");
        }
        m.input("checkpoint:" + fs::path(path).stem().string(), path);
        const Tensor3 pred = reconstruct(model, scene.times, scene.tc_fine, scene.features);
        const auto train = evaluate(pred, scene.obs, split.train, "train");
        const auto test = evaluate(pred, scene.obs, split.test, "test");
        Tensor3 probe_pred(1, 1, pred.channels());
        for (int c = 0; c < pred.channels(); ++c) probe_pred[static_cast<std::size_t>(c)] = pred(pi, pj, c);
        const auto insitu = evaluate(probe_pred, scene.probe_truth(), Mask3(1, 1, pred.channels(), true), "insitu");
        const std::string method = fs::path(path).stem().string();
        reports += "# " + method + " (" + model_kind_name(model.kind) + ")\n" + format_reports({train, test, insitu});
        rows.push_back({method, train, test});
    }
    write_text(out / "reports.txt", reports);
    write_text(out / "table.csv", format_table(rows));
    m.output(out / "reports.txt");
    m.output(out / "table.csv");
    m.write();
    std::fputs(reports.c_str(), stdout);
    return kOk;
}

int cmd_gradcheck(const Common& common, const std::string& fault) {
    GradcheckOptions opts;
    if (common.seed) opts.seed = *common.seed;
    if (!fault.empty() && fault != "amp-sign") throw ConfigError("unknown fault '" + fault + "' for gradcheck");
    opts.flip_amp_sign = fault == "amp-sign";
    const auto report = run_gradcheck(opts);
    for (const auto& g : report.groups) {
        std::printf("%-6s worst_rel_err=%.3e checked=%zu %s\n", g.group.c_str(), g.worst_rel_err, g.checked,
                    g.pass ? "PASS" : "FAIL");
    }
    if (!common.out.empty()) {
        const fs::path out = require_out(common);
        json groups = json::array();
        for (const auto& g : report.groups) {
            groups.push_back({{"group", g.group}, {"worst_rel_err", g.worst_rel_err}, {"checked", g.checked},
                              {"pass", g.pass}});
        }
        write_text(out / "gradcheck.json", json{{"pass", report.pass}, {"groups", groups}}.dump(2) + "\n");
        RunManifest m("gradcheck", out);
        m.config() = {{"tolerance", opts.tolerance}, {"fault", fault}};
        m.seed(opts.seed);
        m.output(out / "gradcheck.json");
        m.write();
    }
    if (!report.pass) {
        for (const auto& g : report.groups) {
            if (!g.pass) std::fprintf(stderr, "gradcheck failed for group %s\n", g.group.c_str());
        }
        return kNumeric;
    }
    return kOk;
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--seed", c.seed, "RNG seed (overrides the config)");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

void add_fit_flags(CLI::App* sub, FitFlags& f, bool with_model) {
    sub->add_option("--scene", f.scene, "scene directory written by synth");
    if (with_model) sub->add_option("--model", f.model, "full|atc|atc-era5|naive");
    sub->add_option("--epochs", f.epochs, "training epochs");
    sub->add_option("--lr", f.lr, "Adam learning rate");
    sub->add_option("--holdout", f.holdout, "held-out fraction of observed entries");
    sub->add_option("--center-driver", f.center, "subtract the per-pixel temporal mean of the driver");
    sub->add_option("--base-width", f.base_width, "U-Net base channel width");
    sub->add_option("--lr-group", f.lr_group, "per-group learning rate, GROUP=LR (a, b, phase, w, conv)");
    sub->add_option("--inject-fault", f.fault, "test hook: numeric")->check(CLI::IsMember({"", "numeric"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pgrecon: physics-guided gap filling for gridded temperature series"};
    app.require_subcommand(1);

    Common common;
    FitFlags fit_flags;
    ReconFlags recon;
    EvalFlags eval;
    std::string gc_fault;

    auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
    add_common(synth, common);

    auto* fit = app.add_subcommand("fit", "split observations and train one model");
    add_common(fit, common);
    add_fit_flags(fit, fit_flags, true);

    auto* baseline = app.add_subcommand("baseline", "train the proposed model and all baselines on one split");
    add_common(baseline, common);
    add_fit_flags(baseline, fit_flags, false);

    auto* rec = app.add_subcommand("reconstruct", "write the gapless reconstruction of a checkpoint");
    add_common(rec, common);
    rec->add_option("--scene", recon.scene, "scene directory");
    rec->add_option("--checkpoint", recon.checkpoint, "PGM1 checkpoint");
    rec->add_option("--images", recon.image_days, "days to dump as PGM images")->delimiter(',');

    auto* ev = app.add_subcommand("evaluate", "train/test/in-situ metrics for checkpoints");
    add_common(ev, common);
    ev->add_option("--scene", eval.scene, "scene directory");
    ev->add_option("--split", eval.split, "split.tsk written by fit");
    ev->add_option("--checkpoint", eval.checkpoints, "PGM1 checkpoint (repeatable)");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
    add_common(gc, common);
    gc->add_option("--inject-fault", gc_fault, "test hook: amp-sign");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        set_num_threads(common.threads);
        if (synth->parsed()) return cmd_synth(common);
        if (fit->parsed()) return cmd_fit(common, fit_flags, false);
        if (baseline->parsed()) return cmd_fit(common, fit_flags, true);
        if (rec->parsed()) return cmd_reconstruct(common, recon);
        if (ev->parsed()) return cmd_evaluate(common, eval);
        if (gc->parsed()) return cmd_gradcheck(common, gc_fault);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kNumeric;
    } catch (const LoadError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const InitError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const PreconditionError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kData;
    }
    return kOk;
}

#include "pgrecon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <json.hpp>

#include "pgrecon/grid.hpp"
#include "pgrecon/hash.hpp"
#include "pgrecon/tsk_io.hpp"

namespace pgrecon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kFeatureNoise = 0.01;

// White noise blurred by a separable Gaussian (sigma = correlation length, edges clamped),
// then min-max scaled to [0, 1].
std::vector<double> smooth_unit_field(std::mt19937_64& rng, int h, int w, double length) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> f(static_cast<std::size_t>(h) * w);
    for (auto& v : f) v = normal(rng);

    if (length > 0.0) {
        const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * length)));
        std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
        double ksum = 0.0;
        for (int d = -radius; d <= radius; ++d) {
            kernel[static_cast<std::size_t>(d + radius)] = std::exp(-0.5 * d * d / (length * length));
            ksum += kernel[static_cast<std::size_t>(d + radius)];
        }
        for (auto& k : kernel) k /= ksum;
        std::vector<double> tmp(f.size());
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double s = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    const int jj = std::clamp(j + d, 0, w - 1);
                    s += kernel[static_cast<std::size_t>(d + radius)] * f[static_cast<std::size_t>(i) * w + jj];
                }
                tmp[static_cast<std::size_t>(i) * w + j] = s;
            }
        }
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double s = 0.0;
                for (int d = -radius; d <= radius; ++d) {
                    const int ii = std::clamp(i + d, 0, h - 1);
                    s += kernel[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(ii) * w + j];
                }
                f[static_cast<std::size_t>(i) * w + j] = s;
            }
        }
    }
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const double lo_v = *lo;
    const double span = *hi - *lo;
    for (auto& v : f) v = span > 0.0 ? (v - lo_v) / span : 0.5;
    return f;
}

std::vector<double> standardized(std::vector<double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    for (double& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
    return v;
}

template <typename T>
T required(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing required field '") + key + "'", key);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what(), key);
    }
}

template <typename T>
void optional_field(const json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what(), key);
    }
}

const char* const kRoleFiles[][2] = {
    {"obs", "obs.tsk"},         {"truth", "truth.tsk"},       {"tc_coarse", "tc_coarse.tsk"},
    {"features", "features.tsk"}, {"atc_a", "atc_a.tsk"},     {"atc_b", "atc_b.tsk"},
    {"atc_phase", "atc_phase.tsk"}, {"amp_w", "amp_w.tsk"},   {"residual", "residual.tsk"},
    {"probe_truth", "probe_truth.tsk"},
};

}  // namespace

void SynthConfig::validate() const {
    auto bad = [](const std::string& msg, const char* field) { throw ConfigError(msg, field); };
    if (height < 4) bad("height must be >= 4", "height");
    if (width < 4) bad("width must be >= 4", "width");
    if (channels < 1) bad("channels must be >= 1", "channels");
    if (feature_channels < 1) bad("feature_channels must be >= 1", "feature_channels");
    if (coarse_height < 1 || coarse_height > height) bad("coarse_height must lie in [1, height]", "coarse_height");
    if (coarse_width < 1 || coarse_width > width) bad("coarse_width must lie in [1, width]", "coarse_width");
    if (!(period > 0.0)) bad("period must be > 0", "period");
    if (!(correlation_length >= 0.0)) bad("correlation_length must be >= 0", "correlation_length");
    if (!(anomaly_variance >= 0.0)) bad("anomaly_variance must be >= 0", "anomaly_variance");
    if (!(residual_amplitude >= 0.0)) bad("residual_amplitude must be >= 0", "residual_amplitude");
    if (!(noise_sigma >= 0.0)) bad("noise_sigma must be >= 0", "noise_sigma");
    if (!(p_day >= 0.0 && p_day <= 1.0)) bad("p_day must lie in [0, 1]", "p_day");
    if (!(p_pix >= 0.0 && p_pix <= 1.0)) bad("p_pix must lie in [0, 1]", "p_pix");
    if (probe_row() >= height) bad("probe_i outside the grid", "probe_i");
    if (probe_col() >= width) bad("probe_j outside the grid", "probe_j");
}

SynthConfig parse_synth_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    SynthConfig c;
    c.height = required<int>(j, "height");
    c.width = required<int>(j, "width");
    c.channels = required<int>(j, "channels");
    c.feature_channels = required<int>(j, "feature_channels");
    c.coarse_height = required<int>(j, "coarse_height");
    c.coarse_width = required<int>(j, "coarse_width");
    optional_field(j, "period", c.period);
    optional_field(j, "correlation_length", c.correlation_length);
    optional_field(j, "anomaly_variance", c.anomaly_variance);
    optional_field(j, "residual_amplitude", c.residual_amplitude);
    optional_field(j, "noise_sigma", c.noise_sigma);
    optional_field(j, "p_day", c.p_day);
    optional_field(j, "p_pix", c.p_pix);
    optional_field(j, "probe_i", c.probe_i);
    optional_field(j, "probe_j", c.probe_j);
    optional_field(j, "seed", c.seed);
    static const char* const kKnown[] = {"height",  "width",          "channels",  "feature_channels",
                                         "coarse_height", "coarse_width", "period", "correlation_length",
                                         "anomaly_variance", "residual_amplitude", "noise_sigma", "p_day",
                                         "p_pix",   "probe_i",        "probe_j",   "seed"};
    for (const auto& item : j.items()) {
        if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return item.key() == k; }) ==
            std::end(kKnown)) {
            throw ConfigError("unknown field '" + item.key() + "'", item.key());
        }
    }
    c.validate();
    return c;
}

std::string synth_config_json(const SynthConfig& c) {
    nlohmann::ordered_json j;
    j["height"] = c.height;
    j["width"] = c.width;
    j["channels"] = c.channels;
    j["feature_channels"] = c.feature_channels;
    j["coarse_height"] = c.coarse_height;
    j["coarse_width"] = c.coarse_width;
    j["period"] = c.period;
    j["correlation_length"] = c.correlation_length;
    j["anomaly_variance"] = c.anomaly_variance;
    j["residual_amplitude"] = c.residual_amplitude;
    j["noise_sigma"] = c.noise_sigma;
    j["p_day"] = c.p_day;
    j["p_pix"] = c.p_pix;
    j["probe_i"] = c.probe_i;
    j["probe_j"] = c.probe_j;
    j["seed"] = c.seed;
    return j.dump(2);
}

Tensor3 SynthScene::probe_truth() const {
    Tensor3 out(1, 1, truth.channels(), 0.0f, Unit::kelvin);
    for (int c = 0; c < truth.channels(); ++c) out(0, 0, c) = truth(cfg.probe_row(), cfg.probe_col(), c);
    return out;
}

SynthScene gen_scene(const SynthConfig& cfg) {
    cfg.validate();
    const int h = cfg.height;
    const int w = cfg.width;
    const int nc = cfg.channels;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SynthScene s;
    s.cfg = cfg;
    s.times = TimeAxis::daily(nc, cfg.period);

    // (1) parameter fields
    const auto ua = smooth_unit_field(rng, h, w, cfg.correlation_length);
    const auto ub = smooth_unit_field(rng, h, w, cfg.correlation_length);
    const auto up = smooth_unit_field(rng, h, w, cfg.correlation_length);
    const auto uw = smooth_unit_field(rng, h, w, cfg.correlation_length);
    s.atc = AtcParams<float>(h, w);
    s.amp = AmpWeights<float>{Tensor3(h, w, 1)};
    for (std::size_t k = 0; k < n; ++k) {
        s.atc.a[k] = static_cast<float>(265.0 + 35.0 * ua[k]);
        s.atc.b[k] = static_cast<float>(5.0 + 15.0 * ub[k]);
        s.atc.phase[k] = static_cast<float>(wrap_phase(std::numbers::pi - 2.0 * std::numbers::pi * up[k]));
        s.amp.w[k] = static_cast<float>(0.1 + 0.8 * uw[k]);
    }

    // (2) coarse driver: AR(1) anomalies with shared and local innovations, plus the offset
    const int hc = cfg.coarse_height;
    const int wc = cfg.coarse_width;
    const std::size_t nc_pix = static_cast<std::size_t>(hc) * wc;
    const double sd = std::sqrt(cfg.anomaly_variance);
    const double innov = sd * std::sqrt(1.0 - kDriverAr1 * kDriverAr1);
    s.tc_coarse = Tensor3(hc, wc, nc, 0.0f, Unit::kelvin);
    std::vector<double> state(nc_pix);
    {
        const double shared0 = normal(rng);
        for (auto& v : state) v = sd * (0.8 * shared0 + 0.6 * normal(rng));
    }
    for (int c = 0; c < nc; ++c) {
        if (c > 0) {
            const double shared = normal(rng);
            for (auto& v : state) v = kDriverAr1 * v + innov * (0.8 * shared + 0.6 * normal(rng));
        }
        auto dst = s.tc_coarse.plane(c);
        for (std::size_t k = 0; k < nc_pix; ++k) dst[k] = static_cast<float>(kDriverOffset + state[k]);
    }
    s.tc_fine = resample_bilinear(s.tc_coarse, h, w);

    // (3) features: fixed mixtures of the (a, b, w) fields plus noise
    s.features = Tensor3(h, w, cfg.feature_channels, 0.0f, Unit::reflectance);
    for (int c = 0; c < cfg.feature_channels; ++c) {
        const double m1 = std::cos(1.7 * c + 0.3);
        const double m2 = std::sin(1.1 * c + 0.5);
        const double m3 = std::cos(0.7 * c + 1.9);
        const double norm = std::abs(m1) + std::abs(m2) + std::abs(m3);
        auto dst = s.features.plane(c);
        for (std::size_t k = 0; k < n; ++k) {
            const double mix = (m1 * ua[k] + m2 * ub[k] + m3 * uw[k]) / norm;
            dst[k] = static_cast<float>(0.25 + 0.2 * mix + kFeatureNoise * normal(rng));
        }
    }

    // (4) residual: R * tanh(s(X)) * z(t) with s a standardized projection of X, |z| <= 1
    std::vector<double> proj(n, 0.0);
    for (int c = 0; c < cfg.feature_channels; ++c) {
        const double v = std::sin(0.9 * c + 0.2);
        const auto src = s.features.plane(c);
        for (std::size_t k = 0; k < n; ++k) proj[k] += v * src[k];
    }
    proj = standardized(std::move(proj));
    s.residual = Tensor3(h, w, nc, 0.0f, Unit::kelvin);
    for (int c = 0; c < nc; ++c) {
        const double z = 2.0 * unit(rng) - 1.0;
        auto dst = s.residual.plane(c);
        for (std::size_t k = 0; k < n; ++k) {
            dst[k] = static_cast<float>(cfg.residual_amplitude * std::tanh(proj[k]) * z);
        }
    }

    // truth and noisy, cloud-masked observations
    s.truth = atc_forward(s.atc, s.times);
    amplify_forward_accumulate(s.amp, s.tc_fine, s.truth);
    for (std::size_t k = 0; k < s.truth.size(); ++k) s.truth[k] += s.residual[k];

    s.obs = Tensor3(h, w, nc, 0.0f, Unit::kelvin);
    for (std::size_t k = 0; k < s.truth.size(); ++k) {
        s.obs[k] = static_cast<float>(s.truth[k] + cfg.noise_sigma * normal(rng));
    }
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (int c = 0; c < nc; ++c) {
        const bool day_clear = unit(rng) < cfg.p_day;
        auto dst = s.obs.plane(c);
        for (std::size_t k = 0; k < n; ++k) {
            const bool pix_clear = unit(rng) < cfg.p_pix;
            if (!(day_clear && pix_clear)) dst[k] = nan;
        }
    }
    return s;
}

void save_scene(const fs::path& dir, const SynthScene& s) {
    fs::create_directories(dir);
    save_stack(dir / "obs.tsk", s.obs, s.times);
    save_stack(dir / "truth.tsk", s.truth, s.times);
    save_stack(dir / "tc_coarse.tsk", s.tc_coarse, s.times);
    save_stack(dir / "residual.tsk", s.residual, s.times);
    write_tsk(dir / "features.tsk", s.features);
    write_tsk(dir / "atc_a.tsk", s.atc.a);
    write_tsk(dir / "atc_b.tsk", s.atc.b);
    write_tsk(dir / "atc_phase.tsk", s.atc.phase);
    write_tsk(dir / "amp_w.tsk", s.amp.w);
    save_stack(dir / "probe_truth.tsk", s.probe_truth(), s.times);

    nlohmann::ordered_json m;
    m["format"] = "pgrecon-scene-1";
    m["config"] = nlohmann::ordered_json::parse(synth_config_json(s.cfg));
    nlohmann::ordered_json roles = nlohmann::ordered_json::object();
    for (const auto& rf : kRoleFiles) {
        roles[rf[0]] = {{"file", rf[1]}, {"sha256", sha256_file(dir / rf[1])}};
    }
    m["roles"] = roles;
    const std::string text = m.dump(2) + "\n";
    write_file_atomic(dir / "manifest.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

SynthScene load_scene(const fs::path& dir) {
    const auto bytes = read_file(dir / "manifest.json");
    json m;
    try {
        m = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw LoadError("manifest.json: " + std::string(e.what()), e.byte);
    }
    SynthScene s;
    try {
        s.cfg = parse_synth_config(m.at("config").dump());
    } catch (const json::exception& e) {
        throw LoadError(std::string("manifest.json: ") + e.what(), 0);
    }
    auto [obs, times] = load_stack(dir / "obs.tsk");
    s.obs = std::move(obs);
    s.times = std::move(times);
    s.truth = read_tsk(dir / "truth.tsk");
    s.tc_coarse = read_tsk(dir / "tc_coarse.tsk");
    s.residual = read_tsk(dir / "residual.tsk");
    s.features = read_tsk(dir / "features.tsk");
    s.atc.a = read_tsk(dir / "atc_a.tsk");
    s.atc.b = read_tsk(dir / "atc_b.tsk");
    s.atc.phase = read_tsk(dir / "atc_phase.tsk");
    s.amp.w = read_tsk(dir / "amp_w.tsk");
    const int h = s.obs.height();
    const int w = s.obs.width();
    const int c = s.obs.channels();
    if (!s.truth.same_shape(h, w, c) || !s.residual.same_shape(h, w, c) || s.tc_coarse.channels() != c ||
        s.features.height() != h || s.features.width() != w || !s.atc.a.same_shape(h, w, 1) ||
        !s.amp.w.same_shape(h, w, 1)) {
        throw LoadError("scene files in " + dir.string() + " have inconsistent dims", 4);
    }
    s.tc_fine = resample_bilinear(s.tc_coarse, h, w);
    return s;
}

RecoveryReport recovery_check(const SynthScene& scene, const ModelState& fitted, double tol) {
    if (scene.cfg.residual_amplitude != 0.0) {
        throw PreconditionError("recovery_check needs a scene generated with residual_amplitude = 0");
    }
    const Tensor3 pred = reconstruct(fitted, scene.times, scene.tc_fine, scene.features);
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) sum += std::abs(static_cast<double>(pred[k]) - scene.truth[k]);
    RecoveryReport r;
    r.gapless_mae = sum / static_cast<double>(pred.size());
    r.tolerance = tol;
    r.pass = r.gapless_mae < tol;
    return r;
}

}  // namespace pgrecon

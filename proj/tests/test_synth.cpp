#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "pgrecon/grid.hpp"
#include "pgrecon/hash.hpp"
#include "pgrecon/synth.hpp"
#include "support.hpp"

using namespace pgrecon;

namespace {

SynthConfig small(std::uint64_t seed) {
    SynthConfig sc;
    sc.height = 16;
    sc.width = 12;
    sc.channels = 60;
    sc.feature_channels = 4;
    sc.coarse_height = 4;
    sc.coarse_width = 3;
    sc.correlation_length = 3;
    sc.seed = seed;
    return sc;
}

std::string dims_json(const std::string& skip = "") {
    std::string s = "{";
    for (const char* k : {"height", "width", "channels", "feature_channels", "coarse_height", "coarse_width"}) {
        if (k == skip) continue;
        s += std::string(s.size() > 1 ? ", " : "") + "\"" + k + "\": 8";
    }
    return s + "}";
}

std::string config_error_field(const std::string& text) {
    try {
        parse_synth_config(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    FAIL("expected ConfigError");
    return {};
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("same seed gives bitwise identical scenes") {
    const auto a = gen_scene(small(3));
    const auto b = gen_scene(small(3));
    CHECK(testing::bitwise_equal(a.obs, b.obs));
    CHECK(testing::bitwise_equal(a.truth, b.truth));
    CHECK(testing::bitwise_equal(a.tc_coarse, b.tc_coarse));
    CHECK(testing::bitwise_equal(a.features, b.features));
    CHECK(testing::bitwise_equal(a.residual, b.residual));
    CHECK(testing::bitwise_equal(a.amp.w, b.amp.w));
    const auto c = gen_scene(small(4));
    CHECK_FALSE(testing::bitwise_equal(a.truth, c.truth));
}

TEST_CASE("scene self-consistency and ranges") {
    const auto s = gen_scene(small(5));
    auto sum = atc_forward(s.atc, s.times);
    amplify_forward_accumulate(s.amp, s.tc_fine, sum);
    for (std::size_t k = 0; k < sum.size(); ++k) REQUIRE(s.truth[k] - (sum[k] + s.residual[k]) == 0.0f);
    CHECK(testing::bitwise_equal(s.tc_fine, resample_bilinear(s.tc_coarse, 16, 12)));
    for (std::size_t k = 0; k < s.atc.a.size(); ++k) {
        CHECK(s.atc.a[k] >= 265.0f);
        CHECK(s.atc.a[k] <= 300.0f);
        CHECK(s.atc.b[k] >= 5.0f);
        CHECK(s.atc.b[k] <= 20.0f);
        CHECK(s.atc.phase[k] > -std::numbers::pi_v<float>);
        CHECK(s.atc.phase[k] <= std::numbers::pi_v<float>);
        CHECK(s.amp.w[k] >= 0.1f);
        CHECK(s.amp.w[k] <= 0.9f);
    }
    for (float v : s.residual.values()) REQUIRE(std::abs(v) <= 1.0f);
    for (const Tensor3* t : {&s.truth, &s.tc_coarse, &s.tc_fine, &s.features, &s.residual}) {
        for (float v : t->values()) REQUIRE(std::isfinite(v));
    }
    CHECK(s.times == TimeAxis::daily(60));
    const auto probe = s.probe_truth();
    REQUIRE(probe.same_shape(1, 1, 60));
    for (int c = 0; c < 60; ++c) CHECK(probe[static_cast<std::size_t>(c)] == s.truth(8, 6, c));
}

TEST_CASE("observations are truth plus noise where clear") {
    auto sc = small(6);
    sc.noise_sigma = 0.5;
    const auto s = gen_scene(sc);
    double sum = 0, ss = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.obs.size(); ++k) {
        if (std::isnan(s.obs[k])) continue;
        const double d = static_cast<double>(s.obs[k]) - s.truth[k];
        sum += d;
        ss += d * d;
        ++n;
    }
    REQUIRE(n > 500);
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(ss / static_cast<double>(n) - mean * mean);
    CHECK(std::abs(mean) < 4 * 0.5 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(sd - 0.5) < 0.05);
}

TEST_CASE("driver anomaly variance") {
    SynthConfig sc = small(7);
    sc.channels = 365;
    const auto s = gen_scene(sc);
    double sum = 0, ss = 0;
    for (float v : s.tc_coarse.values()) {
        sum += v - kDriverOffset;
        ss += (v - kDriverOffset) * (v - kDriverOffset);
    }
    const double n = static_cast<double>(s.tc_coarse.size());
    const double var = ss / n - (sum / n) * (sum / n);
    CHECK(std::abs(var / sc.anomaly_variance - 1.0) < 0.3);
}

TEST_CASE("degenerate scene is an exact cosine") {
    auto sc = small(8);
    sc.noise_sigma = 0;
    sc.residual_amplitude = 0;
    sc.anomaly_variance = 0;
    const auto s = gen_scene(sc);
    for (float v : s.tc_fine.values()) REQUIRE(v == static_cast<float>(kDriverOffset));
    const auto m = s.mask();
    for (int i = 0; i < sc.height; ++i) {
        for (int j = 0; j < sc.width; ++j) {
            const std::size_t px = static_cast<std::size_t>(i * sc.width + j);
            const double a = s.atc.a[px] + kDriverOffset * static_cast<double>(s.amp.w[px]);
            for (int c = 0; c < sc.channels; ++c) {
                if (!m.at(i, j, c)) continue;
                const double expect = a + s.atc.b[px] * std::cos(2 * std::numbers::pi * c / 365.0 + s.atc.phase[px]);
                REQUIRE(std::abs(s.obs(i, j, c) - expect) < 1e-4);
            }
        }
    }
}

TEST_CASE("mask density matches the two-stage binomial model") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthConfig sc = small(seed);
        sc.channels = 365;
        const auto s = gen_scene(sc);
        const double n_pix = sc.height * sc.width;
        const double pd = sc.p_day, pp = sc.p_pix;
        // Per day: X = D * K / N with D ~ Bernoulli(pd), K ~ Binomial(N, pp).
        const double ex2 = pd * (pp * pp + pp * (1 - pp) / n_pix);
        const double var_day = ex2 - pd * pd * pp * pp;
        const double se = std::sqrt(var_day / sc.channels);
        const double density = static_cast<double>(s.mask().popcount()) / static_cast<double>(s.obs.size());
        CHECK(std::abs(density - pd * pp) < 3 * se);
    }
}

TEST_CASE("config parsing") {
    const auto c = parse_synth_config(dims_json());
    CHECK(c.height == 8);
    CHECK(c.period == 365.0);
    CHECK(c.p_day == 0.3);
    for (const char* k : {"height", "width", "channels", "feature_channels", "coarse_height", "coarse_width"}) {
        CHECK(config_error_field(dims_json(k)) == k);
    }
    CHECK(config_error_field(R"({"height": 8, "width": 8, "channels": 8, "feature_channels": 2,
        "coarse_height": 2, "coarse_width": 2, "p_day": 1.5})") == "p_day");
    CHECK(config_error_field(R"({"height": 8, "width": 8, "channels": 8, "feature_channels": 2,
        "coarse_height": 2, "coarse_width": 2, "colour": 1})") == "colour");
    CHECK(config_error_field(R"({"height": "tall", "width": 8, "channels": 8, "feature_channels": 2,
        "coarse_height": 2, "coarse_width": 2})") == "height");
    CHECK_THROWS_AS(parse_synth_config("{\"height\": 8,"), ConfigError);
    CHECK_THROWS_AS(parse_synth_config("[1, 2]"), ConfigError);

    auto full = small(77);
    full.noise_sigma = 0.25;
    full.probe_i = 2;
    const auto back = parse_synth_config(synth_config_json(full));
    CHECK(synth_config_json(back) == synth_config_json(full));
    CHECK(back.seed == 77);
    CHECK(back.probe_i == 2);
}

TEST_CASE("scene directory round-trip and manifest hashes") {
    testing::TempDir dir;
    const auto s = gen_scene(small(10));
    save_scene(dir.path(), s);
    std::ifstream in(dir / "manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    CHECK(manifest.at("format") == "pgrecon-scene-1");
    for (const auto& [role, entry] : manifest.at("roles").items()) {
        const auto file = dir / entry.at("file").get<std::string>();
        CHECK(std::filesystem::exists(file));
        CHECK(entry.at("sha256").get<std::string>() == sha256_file(file));
    }
    CHECK(manifest.at("roles").contains("probe_truth"));
    const auto back = load_scene(dir.path());
    CHECK(testing::bitwise_equal(back.obs, s.obs));
    CHECK(testing::bitwise_equal(back.truth, s.truth));
    CHECK(testing::bitwise_equal(back.tc_fine, s.tc_fine));
    CHECK(testing::bitwise_equal(back.features, s.features));
    CHECK(back.times == s.times);
    CHECK(synth_config_json(back.cfg) == synth_config_json(s.cfg));
}

TEST_CASE("sha256 known answer") {
    const std::string abc = "abc";
    CHECK(sha256_hex(std::vector<std::uint8_t>(abc.begin(), abc.end())) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("recovery check") {
    auto sc = small(11);
    sc.residual_amplitude = 0;
    sc.noise_sigma = 0;
    const auto s = gen_scene(sc);

    ModelState perfect;
    perfect.kind = ModelKind::atc_era5;
    perfect.times = s.times;
    perfect.params.atc = s.atc;
    perfect.params.amp = s.amp;
    perfect.unet_cfg = UNetConfig{1, sc.channels, 2, 3};
    perfect.params.unet = UNetWeights<float>::zeros(perfect.unet_cfg);
    const auto r = recovery_check(s, perfect, 1e-9);
    CHECK(r.gapless_mae == 0.0);
    CHECK(r.pass);

    sc.anomaly_variance = 0;
    const auto flat = gen_scene(sc);
    TrainConfig cfg;
    cfg.base_width = 2;
    // Adam steps of 0.1 jitter the fit at about 0.05 K
    cfg.lr = 0.03;
    const FitData data{flat.obs, flat.times, flat.tc_fine, flat.features};
    const auto fitted = fit_model(ModelKind::atc, data, flat.mask(), cfg);
    const auto rr = recovery_check(flat, fitted.model, 0.05);
    CHECK(rr.pass);
    CHECK(rr.gapless_mae < 0.05);

    CHECK_THROWS_AS(recovery_check(gen_scene(small(12)), perfect, 0.05), PreconditionError);
}

TEST_CASE("invalid configs") {
    auto bad = small(1);
    bad.coarse_height = 40;
    CHECK_THROWS_AS(gen_scene(bad), ConfigError);
    bad = small(1);
    bad.noise_sigma = -1;
    CHECK_THROWS_AS(gen_scene(bad), ConfigError);
    bad = small(1);
    bad.height = 0;
    CHECK_THROWS_AS(gen_scene(bad), ConfigError);
}

}  // TEST_SUITE

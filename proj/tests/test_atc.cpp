#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "pgrecon/atc.hpp"
#include "support.hpp"

using namespace pgrecon;

namespace {

constexpr double kPi = std::numbers::pi;

AtcParams<double> single(double a, double b, double phase) {
    AtcParams<double> p(1, 1);
    p.a[0] = a;
    p.b[0] = b;
    p.phase[0] = phase;
    return p;
}

double cosine(double a, double b, double phase, double t, double period) {
    return a + b * std::cos(2 * kPi * t / period + phase);
}

// Least-squares harmonic fit by QR, then (b, phase) from (alpha, beta).
std::array<double, 3> qr_fit(const std::vector<double>& t, const std::vector<double>& y, double period) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(t.size()), 3);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(t.size()));
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double wt = 2 * kPi * t[k] / period;
        x.row(static_cast<Eigen::Index>(k)) << 1.0, std::cos(wt), std::sin(wt);
        rhs(static_cast<Eigen::Index>(k)) = y[k];
    }
    const Eigen::Vector3d c = x.colPivHouseholderQr().solve(rhs);
    return {c(0), std::hypot(c(1), c(2)), std::atan2(-c(2), c(1))};
}

}  // namespace

TEST_SUITE("atc") {

TEST_CASE("forward at quarter-period points") {
    const auto p = single(280, 15, 0);
    const auto out = atc_forward(p, TimeAxis{{0, 91.25, 182.5}, 365});
    CHECK(out[0] == doctest::Approx(295).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(280).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(265).epsilon(1e-12));
    const auto outf = atc_forward(p.cast<float>(), TimeAxis{{0, 91.25, 182.5}, 365});
    CHECK(outf[0] == 295.0f);
    CHECK(outf[2] == 265.0f);
    CHECK(std::abs(outf[1] - 280.0f) < 1e-4f);
}

TEST_CASE("forward matches the cosine formula and is periodic") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    AtcParams<double> p(3, 4);
    for (std::size_t k = 0; k < 12; ++k) {
        p.a[k] = 280 + 10 * u(rng);
        p.b[k] = 15 * u(rng);
        p.phase[k] = 4 * u(rng);
    }
    TimeAxis times{{0, 17.5, 100, 250.25}, 365};
    TimeAxis shifted = times;
    for (auto& t : shifted.days) t += 365;
    const auto out = atc_forward(p, times);
    const auto later = atc_forward(p.cast<float>(), shifted);
    for (int c = 0; c < 4; ++c) {
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 4; ++j) {
                const std::size_t k = static_cast<std::size_t>(i * 4 + j);
                const double expect = cosine(p.a[k], p.b[k], p.phase[k], times.days[static_cast<std::size_t>(c)], 365);
                CHECK(out(i, j, c) == doctest::Approx(expect).epsilon(1e-12));
                CHECK(std::abs(later(i, j, c) - expect) < 1e-4);
            }
        }
    }
}

TEST_CASE("init recovers a noiseless daily cosine") {
    const auto times = TimeAxis::daily(365);
    Tensor3d obs(1, 1, 365);
    for (int c = 0; c < 365; ++c) obs[static_cast<std::size_t>(c)] = cosine(280, 15, 1.0, c, 365);
    const auto p = canonicalize(atc_init(obs, Mask3(1, 1, 365, true), times));
    CHECK(std::abs(p.a[0] - 280) < 1e-6);
    CHECK(std::abs(p.b[0] - 15) < 1e-6);
    CHECK(std::abs(p.phase[0] - 1.0) < 1e-6);
}

TEST_CASE("init matches an independent QR solve on sparse masks") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    const int h = 4, w = 5, c = 120;
    TimeAxis times;
    for (int k = 0; k < c; ++k) times.days.push_back(3.0 * k + 0.25);
    Tensor3d obs(h, w, c);
    Mask3 mask(h, w, c);
    for (std::size_t k = 0; k < obs.size(); ++k) {
        obs[k] = 250 + 60 * u(rng);
        mask.set(k, u(rng) < 0.3);
    }
    const auto p = atc_init(obs, mask, times);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            std::vector<double> t, y;
            for (int k = 0; k < c; ++k) {
                if (mask.at(i, j, k)) {
                    t.push_back(times.days[static_cast<std::size_t>(k)]);
                    y.push_back(obs(i, j, k));
                }
            }
            REQUIRE(t.size() >= 3);
            const auto ref = qr_fit(t, y, times.period);
            const std::size_t px = static_cast<std::size_t>(i * w + j);
            CHECK(p.a[px] == doctest::Approx(ref[0]).epsilon(1e-9));
            CHECK(p.b[px] == doctest::Approx(ref[1]).epsilon(1e-8));
            CHECK(std::abs(wrap_phase(p.phase[px] - ref[2])) < 1e-8);
        }
    }
}

TEST_CASE("init fallbacks") {
    const auto times = TimeAxis::daily(10);
    Tensor3 obs(1, 3, 10, 0.0f, Unit::kelvin);
    Mask3 mask(1, 3, 10);
    // pixel 0: two samples
    obs(0, 0, 2) = 270;
    obs(0, 0, 7) = 290;
    mask.set(obs.index(0, 0, 2), true);
    mask.set(obs.index(0, 0, 7), true);
    // pixel 1: same time sampled across years is still one distinct phase angle
    TimeAxis repeated{{0, 365, 730, 1095, 1460, 1825, 2190, 2555, 2920, 3285}, 365};
    Tensor3 obs2(1, 1, 10, 0.0f);
    for (int c = 0; c < 10; ++c) obs2(0, 0, c) = static_cast<float>(280 + c);
    const auto p2 = atc_init(obs2, Mask3(1, 1, 10, true), repeated);
    CHECK(p2.a[0] == doctest::Approx(284.5));
    CHECK(p2.b[0] == 0.0f);
    CHECK(p2.phase[0] == 0.0f);

    const auto p = atc_init(obs, mask, times);
    CHECK(p.a[0] == 280.0f);
    CHECK(p.b[0] == 0.0f);
    CHECK(p.phase[0] == 0.0f);
    // pixels 1 and 2 unobserved: global mean of a over observed pixels
    CHECK(p.a[1] == 280.0f);
    CHECK(p.b[2] == 0.0f);
}

TEST_CASE("unobserved pixels take the mean a of observed pixels") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    const auto times = TimeAxis::daily(40);
    Tensor3 obs(3, 3, 40, 0.0f, Unit::kelvin);
    Mask3 mask(3, 3, 40);
    std::vector<double> truth_a(9, 0.0);
    for (int px = 0; px < 9; ++px) {
        if (px == 4) continue;
        truth_a[static_cast<std::size_t>(px)] = 281 + 3 * u(rng);
        for (int c = 0; c < 40; ++c) {
            const std::size_t k = obs.index(px / 3, px % 3, c);
            obs[k] = static_cast<float>(cosine(truth_a[static_cast<std::size_t>(px)], 10, 0.5, c, 365));
            mask.set(k, true);
        }
    }
    const auto p = atc_init(obs.cast<double>(), mask, times);
    double mean = 0;
    for (int px = 0; px < 9; ++px) {
        if (px != 4) mean += p.a[static_cast<std::size_t>(px)];
    }
    mean /= 8;
    CHECK(p.a[4] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(p.b[4] == 0.0);
    CHECK(p.phase[4] == 0.0);
}

TEST_CASE("init with no observations is an error") {
    CHECK_THROWS_AS(atc_init(Tensor3(2, 2, 5), Mask3(2, 2, 5), TimeAxis::daily(5)), InitError);
    CHECK_THROWS_AS(atc_init(Tensor3(2, 2, 5), Mask3(2, 2, 4, true), TimeAxis::daily(5)), PreconditionError);
}

TEST_CASE("backward: zero upstream and zero amplitude") {
    const auto times = TimeAxis::daily(12, 12);
    auto p = single(280, 0, 0.7);
    Tensor3d up(1, 1, 12, 0.0);
    auto g = atc_backward(p, times, up);
    CHECK(g.a[0] == 0.0);
    CHECK(g.b[0] == 0.0);
    CHECK(g.phase[0] == 0.0);
    for (int c = 0; c < 12; ++c) up[static_cast<std::size_t>(c)] = c - 5.5;
    g = atc_backward(p, times, up);
    CHECK(g.phase[0] == 0.0);
    CHECK(g.a[0] == doctest::Approx(0.0));
}

TEST_CASE("backward matches central differences") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1, 1);
    const int h = 2, w = 3, c = 9;
    TimeAxis times;
    for (int k = 0; k < c; ++k) times.days.push_back(40.0 * k + 3);
    AtcParams<double> p(h, w);
    Tensor3d up(h, w, c);
    for (std::size_t k = 0; k < 6; ++k) {
        p.a[k] = 280 + 5 * u(rng);
        p.b[k] = 12 * u(rng);
        p.phase[k] = 3 * u(rng);
    }
    for (auto& v : up.values()) v = u(rng);
    auto objective = [&](const AtcParams<double>& q) {
        const auto out = atc_forward(q, times);
        double s = 0;
        for (std::size_t k = 0; k < out.size(); ++k) s += up[k] * out[k];
        return s;
    };
    const auto g = atc_backward(p, times, up);
    const double step = 1e-3;
    for (std::size_t k = 0; k < 6; ++k) {
        for (int which = 0; which < 3; ++which) {
            auto plus = p, minus = p;
            auto& pp = which == 0 ? plus.a : (which == 1 ? plus.b : plus.phase);
            auto& pm = which == 0 ? minus.a : (which == 1 ? minus.b : minus.phase);
            pp[k] += step;
            pm[k] -= step;
            const double fd = (objective(plus) - objective(minus)) / (2 * step);
            const double an = which == 0 ? g.a[k] : (which == 1 ? g.b[k] : g.phase[k]);
            CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}) < 1e-4);
        }
    }
}

TEST_CASE("canonicalize") {
    const TimeAxis times{{0, 50, 123.5, 300}, 365};
    auto check_same_forward = [&](const AtcParams<double>& x, const AtcParams<double>& y) {
        const auto fx = atc_forward(x, times);
        const auto fy = atc_forward(y, times);
        for (std::size_t k = 0; k < fx.size(); ++k) CHECK(std::abs(fx[k] - fy[k]) < 1e-4);
    };
    const auto neg = single(280, -5, 0);
    const auto c1 = canonicalize(neg);
    CHECK(c1.a[0] == 280);
    CHECK(c1.b[0] == 5);
    CHECK(c1.phase[0] == doctest::Approx(kPi).epsilon(1e-15));
    check_same_forward(neg, c1);

    const auto wrapped = canonicalize(single(280, 5, 3 * kPi));
    CHECK(wrapped.phase[0] == doctest::Approx(kPi).epsilon(1e-12));
    CHECK(canonicalize(single(280, 5, -kPi)).phase[0] == doctest::Approx(kPi).epsilon(1e-15));

    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = single(280 + u(rng), 20 * u(rng), 20 * u(rng));
        const auto c = canonicalize(p);
        CHECK(c.b[0] >= 0);
        CHECK(c.phase[0] > -kPi);
        CHECK(c.phase[0] <= kPi);
        check_same_forward(p, c);
        const auto cc = canonicalize(c);
        CHECK(cc.a[0] == c.a[0]);
        CHECK(cc.b[0] == c.b[0]);
        CHECK(cc.phase[0] == c.phase[0]);
    }
}

}  // TEST_SUITE

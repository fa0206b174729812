#include <doctest.h>

#include <random>

#include "pgrecon/amplify.hpp"
#include "support.hpp"

using namespace pgrecon;

namespace {

AmpWeights<double> weights(int h, int w, double v) { return {Tensor3d(h, w, 1, v)}; }

}  // namespace

TEST_SUITE("amplify") {

TEST_CASE("forward examples") {
    const Tensor3 tc(2, 2, 3, 300.0f, Unit::kelvin);
    const auto zero = amplify_forward(amp_init(2, 2), tc);
    for (float v : zero.values()) CHECK(v == 0.0f);
    const auto unit = amplify_forward(AmpWeights<float>{Tensor3(2, 2, 1, 1.0f)}, tc);
    for (float v : unit.values()) CHECK(v == 300.0f);
    const Tensor3 tc290(1, 1, 1, 290.0f);
    CHECK(amplify_forward(AmpWeights<float>{Tensor3(1, 1, 1, 0.5f)}, tc290)[0] == 145.0f);
}

TEST_CASE("init is a zero plane") {
    const auto w = amp_init(5, 7);
    CHECK(w.w.same_shape(5, 7, 1));
    for (float v : w.w.values()) CHECK(v == 0.0f);
}

TEST_CASE("accumulate adds into the output") {
    Tensor3 out(1, 2, 2, 1.0f);
    Tensor3 tc(1, 2, 2, 10.0f);
    AmpWeights<float> w{Tensor3(1, 2, 1, 0.25f)};
    amplify_forward_accumulate(w, tc, out);
    for (float v : out.values()) CHECK(v == 3.5f);
    CHECK_THROWS_AS(amplify_forward(w, Tensor3(2, 2, 2)), PreconditionError);
}

TEST_CASE("backward examples") {
    const Tensor3d tc(1, 1, 1, 300.0);
    CHECK(amplify_backward(weights(1, 1, 0.3), tc, Tensor3d(1, 1, 1, 2.0))[0] == 600.0);
    const auto g = amplify_backward(weights(2, 2, 0.3), Tensor3d(2, 2, 4, 280.0), Tensor3d(2, 2, 4));
    for (double v : g.values()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("backward matches central differences") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1, 1);
    const int h = 3, w = 2, c = 7;
    Tensor3d tc(h, w, c), up(h, w, c);
    auto wt = weights(h, w, 0.0);
    for (auto& v : tc.values()) v = 280 + 5 * u(rng);
    for (auto& v : up.values()) v = u(rng);
    for (auto& v : wt.w.values()) v = 0.5 + 0.4 * u(rng);
    auto objective = [&](const AmpWeights<double>& q) {
        const auto out = amplify_forward(q, tc);
        double s = 0;
        for (std::size_t k = 0; k < out.size(); ++k) s += up[k] * out[k];
        return s;
    };
    const auto g = amplify_backward(wt, tc, up);
    for (std::size_t k = 0; k < wt.w.size(); ++k) {
        auto plus = wt, minus = wt;
        const double step = 1e-6 * std::max(1.0, std::abs(wt.w[k]));
        plus.w[k] += step;
        minus.w[k] -= step;
        const double fd = (objective(plus) - objective(minus)) / (2 * step);
        CHECK(std::abs(g[k] - fd) / std::max({std::abs(g[k]), std::abs(fd), 1e-6}) < 1e-4);
    }
}

TEST_CASE("forward is linear in w and in tc") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor3 tc1(4, 4, 5), tc2(4, 4, 5), tcsum(4, 4, 5);
        AmpWeights<float> w1{Tensor3(4, 4, 1)}, w2{Tensor3(4, 4, 1)}, wsum{Tensor3(4, 4, 1)};
        for (std::size_t k = 0; k < tc1.size(); ++k) {
            tc1[k] = static_cast<float>(280 + 10 * u(rng));
            tc2[k] = static_cast<float>(280 + 10 * u(rng));
            tcsum[k] = tc1[k] + tc2[k];
        }
        for (std::size_t k = 0; k < 16; ++k) {
            w1.w[k] = static_cast<float>(u(rng));
            w2.w[k] = static_cast<float>(u(rng));
            wsum.w[k] = w1.w[k] + w2.w[k];
        }
        const auto a = amplify_forward(w1, tc1);
        const auto b = amplify_forward(w1, tc2);
        const auto ab = amplify_forward(w1, tcsum);
        const auto c = amplify_forward(w2, tc1);
        const auto wc = amplify_forward(wsum, tc1);
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(ab[k] == doctest::Approx(a[k] + b[k]).epsilon(1e-4));
            CHECK(wc[k] == doctest::Approx(a[k] + c[k]).epsilon(1e-4).scale(600));
        }
    }
}

TEST_CASE("driver centering") {
    Tensor3 tc(1, 2, 3);
    const float vals[] = {1, 10, 2, 20, 3, 60};
    for (std::size_t k = 0; k < 6; ++k) tc[k] = vals[k];
    const auto mean = driver_temporal_mean(tc);
    CHECK(mean[0] == 2.0f);
    CHECK(mean[1] == 30.0f);
    const auto centred = center_driver(tc, mean);
    CHECK(centred(0, 0, 0) == -1.0f);
    CHECK(centred(0, 1, 2) == 30.0f);
}

}  // TEST_SUITE

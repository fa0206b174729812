#include "pgrecon/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

namespace pgrecon {

namespace {

std::atomic<int> g_threads{1};

struct AxisTap {
    int lo;
    int hi;
    double frac;
};

std::vector<AxisTap> axis_taps(int coarse_n, int fine_n) {
    std::vector<AxisTap> taps(static_cast<std::size_t>(fine_n));
    const double scale = static_cast<double>(coarse_n) / fine_n;
    for (int x = 0; x < fine_n; ++x) {
        double xc = (x + 0.5) * scale - 0.5;
        xc = std::clamp(xc, 0.0, static_cast<double>(coarse_n - 1));
        const int lo = static_cast<int>(std::floor(xc));
        const int hi = std::min(lo + 1, coarse_n - 1);
        taps[static_cast<std::size_t>(x)] = {lo, hi, xc - lo};
    }
    return taps;
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

void parallel_for(int begin, int end, const std::function<void(int)>& fn) {
    const int n = end - begin;
    if (n <= 0) return;
    const int workers = std::min(num_threads(), n);
    if (workers <= 1) {
        for (int k = begin; k < end; ++k) fn(k);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        const int lo = begin + static_cast<int>(static_cast<long long>(n) * t / workers);
        const int hi = begin + static_cast<int>(static_cast<long long>(n) * (t + 1) / workers);
        pool.emplace_back([lo, hi, &fn] {
            for (int k = lo; k < hi; ++k) fn(k);
        });
    }
    for (auto& th : pool) th.join();
}

Tensor3 resample_bilinear(const Tensor3& coarse, int height, int width) {
    const int hc = coarse.height();
    const int wc = coarse.width();
    if (height < hc || width < wc) {
        throw PreconditionError("resample target must be at least as large as the coarse grid");
    }
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        if (std::isnan(coarse[k])) throw PreconditionError("coarse driver contains NaN at index " + std::to_string(k));
    }
    const auto rows = axis_taps(hc, height);
    const auto cols = axis_taps(wc, width);
    Tensor3 fine(height, width, coarse.channels(), 0.0f, coarse.unit());
    parallel_for(0, coarse.channels(), [&](int c) {
        const auto src = coarse.plane(c);
        auto dst = fine.plane(c);
        for (int i = 0; i < height; ++i) {
            const AxisTap& r = rows[static_cast<std::size_t>(i)];
            for (int j = 0; j < width; ++j) {
                const AxisTap& q = cols[static_cast<std::size_t>(j)];
                const double v00 = src[static_cast<std::size_t>(r.lo) * wc + q.lo];
                const double v01 = src[static_cast<std::size_t>(r.lo) * wc + q.hi];
                const double v10 = src[static_cast<std::size_t>(r.hi) * wc + q.lo];
                const double v11 = src[static_cast<std::size_t>(r.hi) * wc + q.hi];
                const double top = v00 + (v01 - v00) * q.frac;
                const double bot = v10 + (v11 - v10) * q.frac;
                dst[static_cast<std::size_t>(i) * width + j] = static_cast<float>(top + (bot - top) * r.frac);
            }
        }
    });
    return fine;
}

Split holdout_split(const Mask3& observed, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw PreconditionError("holdout fraction must lie in (0, 1)");
    std::vector<std::size_t> idx;
    idx.reserve(observed.popcount());
    for (std::size_t k = 0; k < observed.size(); ++k) {
        if (observed[k]) idx.push_back(k);
    }
    if (idx.size() < 2) throw PreconditionError("holdout split needs at least 2 observed entries");

    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));

    Split s{observed, Mask3(observed.height(), observed.width(), observed.channels())};
    for (std::size_t k = 0; k < n_test; ++k) {
        s.train.set(idx[k], false);
        s.test.set(idx[k], true);
    }
    return s;
}

}  // namespace pgrecon

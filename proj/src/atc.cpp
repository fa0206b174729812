#include "pgrecon/atc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "pgrecon/grid.hpp"

namespace pgrecon {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPivotRatio = 1e-9;

struct ChannelTrig {
    std::vector<double> cos_t;
    std::vector<double> sin_t;
};

ChannelTrig channel_trig(const TimeAxis& times) {
    if (!(times.period > 0.0)) throw PreconditionError("time axis period must be > 0");
    ChannelTrig ct;
    ct.cos_t.resize(times.days.size());
    ct.sin_t.resize(times.days.size());
    const double omega = kTwoPi / times.period;
    for (std::size_t c = 0; c < times.days.size(); ++c) {
        ct.cos_t[c] = std::cos(omega * times.days[c]);
        ct.sin_t[c] = std::sin(omega * times.days[c]);
    }
    return ct;
}

// Solves the 3x3 system in place by partial-pivot elimination. Returns false when the
// smallest pivot falls below kPivotRatio times the largest.
bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> rhs, std::array<double, 3>& x) {
    std::array<double, 3> pivots{};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[best][col])) best = r;
        }
        std::swap(m[col], m[best]);
        std::swap(rhs[col], rhs[best]);
        pivots[col] = m[col][col];
        if (pivots[col] == 0.0) return false;
        for (int r = col + 1; r < 3; ++r) {
            const double f = m[r][col] / m[col][col];
            for (int k = col; k < 3; ++k) m[r][k] -= f * m[col][k];
            rhs[r] -= f * rhs[col];
        }
    }
    double largest = 0.0;
    double smallest = INFINITY;
    for (double p : pivots) {
        largest = std::max(largest, std::abs(p));
        smallest = std::min(smallest, std::abs(p));
    }
    if (smallest < kPivotRatio * largest) return false;
    for (int r = 2; r >= 0; --r) {
        double s = rhs[r];
        for (int k = r + 1; k < 3; ++k) s -= m[r][k] * x[k];
        x[r] = s / m[r][r];
    }
    return true;
}

}  // namespace

double wrap_phase(double x) {
    double r = std::remainder(x, kTwoPi);
    if (r <= -std::numbers::pi) r += kTwoPi;
    if (r > std::numbers::pi) r -= kTwoPi;
    return r;
}

template <typename T>
void atc_forward_accumulate(const AtcParams<T>& p, const TimeAxis& times, BasicTensor3<T>& out) {
    const int h = p.height();
    const int w = p.width();
    require_same_shape(out, h, w, times.size(), "atc_forward output");
    const ChannelTrig ct = channel_trig(times);
    const std::size_t n = out.plane_size();
    std::vector<double> a(n), bc(n), bs(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double ph = p.phase[k];
        a[k] = p.a[k];
        bc[k] = p.b[k] * std::cos(ph);
        bs[k] = p.b[k] * std::sin(ph);
    }
    parallel_for(0, times.size(), [&](int c) {
        const double ctc = ct.cos_t[static_cast<std::size_t>(c)];
        const double stc = ct.sin_t[static_cast<std::size_t>(c)];
        auto dst = out.plane(c);
        for (std::size_t k = 0; k < n; ++k) {
            const double v = a[k] + (bc[k] * ctc - bs[k] * stc);
            dst[k] = static_cast<T>(dst[k] + v);
        }
    });
}

template <typename T>
BasicTensor3<T> atc_forward(const AtcParams<T>& p, const TimeAxis& times) {
    BasicTensor3<T> out(p.height(), p.width(), times.size(), T(0), Unit::kelvin);
    atc_forward_accumulate(p, times, out);
    return out;
}

template <typename T>
AtcGrads<T> atc_backward(const AtcParams<T>& p, const TimeAxis& times, const BasicTensor3<T>& upstream) {
    const int h = p.height();
    const int w = p.width();
    require_same_shape(upstream, h, w, times.size(), "atc_backward upstream");
    const ChannelTrig ct = channel_trig(times);
    const std::size_t n = upstream.plane_size();
    std::vector<double> cph(n), sph(n);
    for (std::size_t k = 0; k < n; ++k) {
        cph[k] = std::cos(static_cast<double>(p.phase[k]));
        sph[k] = std::sin(static_cast<double>(p.phase[k]));
    }
    std::vector<double> ga(n, 0.0), gcos(n, 0.0), gsin(n, 0.0);
    // Per-pixel sums run over channels in ascending order.
    for (int c = 0; c < times.size(); ++c) {
        const double ctc = ct.cos_t[static_cast<std::size_t>(c)];
        const double stc = ct.sin_t[static_cast<std::size_t>(c)];
        const auto up = upstream.plane(c);
        for (std::size_t k = 0; k < n; ++k) {
            const double u = up[k];
            ga[k] += u;
            gcos[k] += u * (ctc * cph[k] - stc * sph[k]);
            gsin[k] += u * (stc * cph[k] + ctc * sph[k]);
        }
    }
    AtcGrads<T> g{BasicTensor3<T>(h, w, 1), BasicTensor3<T>(h, w, 1), BasicTensor3<T>(h, w, 1)};
    for (std::size_t k = 0; k < n; ++k) {
        g.a[k] = static_cast<T>(ga[k]);
        g.b[k] = static_cast<T>(gcos[k]);
        g.phase[k] = static_cast<T>(-static_cast<double>(p.b[k]) * gsin[k]);
    }
    return g;
}

template <typename T>
AtcParams<T> atc_init(const BasicTensor3<T>& obs, const Mask3& mask, const TimeAxis& times) {
    const int h = obs.height();
    const int w = obs.width();
    if (!mask.same_shape(obs) || times.size() != obs.channels()) {
        throw PreconditionError("atc_init: observation, mask and time axis dims disagree");
    }
    const ChannelTrig ct = channel_trig(times);
    const std::size_t n = obs.plane_size();
    AtcParams<T> out(h, w);
    std::vector<char> seen(n, 0);
    std::vector<double> a_fit(n, 0.0);

    parallel_for(0, static_cast<int>(n), [&](int pix) {
        const auto k = static_cast<std::size_t>(pix);
        std::array<std::array<double, 3>, 3> m{};
        std::array<double, 3> rhs{};
        std::size_t count = 0;
        double sum = 0.0;
        for (int c = 0; c < obs.channels(); ++c) {
            const std::size_t idx = static_cast<std::size_t>(c) * n + k;
            if (!mask[idx]) continue;
            const double y = obs[idx];
            const std::array<double, 3> basis{1.0, ct.cos_t[static_cast<std::size_t>(c)],
                                              ct.sin_t[static_cast<std::size_t>(c)]};
            for (int r = 0; r < 3; ++r) {
                for (int q = 0; q < 3; ++q) m[r][q] += basis[r] * basis[q];
                rhs[r] += basis[r] * y;
            }
            sum += y;
            ++count;
        }
        if (count == 0) return;
        seen[k] = 1;
        std::array<double, 3> x{};
        if (count >= 3 && solve3(m, rhs, x)) {
            a_fit[k] = x[0];
            out.a[k] = static_cast<T>(x[0]);
            out.b[k] = static_cast<T>(std::hypot(x[1], x[2]));
            out.phase[k] = static_cast<T>(wrap_phase(std::atan2(-x[2], x[1])));
        } else {
            a_fit[k] = sum / static_cast<double>(count);
            out.a[k] = static_cast<T>(a_fit[k]);
        }
    });

    double total = 0.0;
    std::size_t covered = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (seen[k]) {
            total += a_fit[k];
            ++covered;
        }
    }
    if (covered == 0) throw InitError("atc_init: no observed entries anywhere");
    const T fill = static_cast<T>(total / static_cast<double>(covered));
    for (std::size_t k = 0; k < n; ++k) {
        if (!seen[k]) out.a[k] = fill;
    }
    return out;
}

template <typename T>
AtcParams<T> canonicalize(const AtcParams<T>& p) {
    AtcParams<T> out = p;
    for (std::size_t k = 0; k < p.b.size(); ++k) {
        double b = p.b[k];
        double ph = p.phase[k];
        if (b < 0.0) {
            b = -b;
            ph += std::numbers::pi;
        }
        out.b[k] = static_cast<T>(b);
        out.phase[k] = static_cast<T>(wrap_phase(ph));
        // Rounding to T can land exactly on -pi.
        if (static_cast<double>(out.phase[k]) <= -std::numbers::pi) {
            out.phase[k] = static_cast<T>(std::numbers::pi);
        }
    }
    return out;
}

#define PGRECON_INSTANTIATE_ATC(T)                                                                        \
    template BasicTensor3<T> atc_forward(const AtcParams<T>&, const TimeAxis&);                          \
    template void atc_forward_accumulate(const AtcParams<T>&, const TimeAxis&, BasicTensor3<T>&);        \
    template AtcGrads<T> atc_backward(const AtcParams<T>&, const TimeAxis&, const BasicTensor3<T>&);     \
    template AtcParams<T> atc_init(const BasicTensor3<T>&, const Mask3&, const TimeAxis&);               \
    template AtcParams<T> canonicalize(const AtcParams<T>&);

PGRECON_INSTANTIATE_ATC(float)
PGRECON_INSTANTIATE_ATC(double)

}  // namespace pgrecon

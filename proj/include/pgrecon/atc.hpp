#pragma once

#include "pgrecon/tensor.hpp"

namespace pgrecon {

/// Per-pixel annual temperature cycle a + b * cos(2*pi*t/T + phase).
/// Each plane is H x W x 1.
template <typename T>
struct AtcParams {
    BasicTensor3<T> a;      // kelvin, annual mean
    BasicTensor3<T> b;      // kelvin, amplitude
    BasicTensor3<T> phase;  // radians

    AtcParams() = default;
    AtcParams(int h, int w)
        : a(h, w, 1, T(0), Unit::kelvin), b(h, w, 1, T(0), Unit::kelvin), phase(h, w, 1, T(0)) {}

    int height() const { return a.height(); }
    int width() const { return a.width(); }

    template <typename U>
    AtcParams<U> cast() const {
        AtcParams<U> out;
        out.a = a.template cast<U>();
        out.b = b.template cast<U>();
        out.phase = phase.template cast<U>();
        return out;
    }
};

template <typename T>
struct AtcGrads {
    BasicTensor3<T> a;
    BasicTensor3<T> b;
    BasicTensor3<T> phase;
};

class InitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
BasicTensor3<T> atc_forward(const AtcParams<T>& p, const TimeAxis& times);

/// Adds atc_forward(p, times) into `out` (H x W x C).
template <typename T>
void atc_forward_accumulate(const AtcParams<T>& p, const TimeAxis& times, BasicTensor3<T>& out);

/// Contracts `upstream` against the analytic partials 1, cos(wt + phase), -b sin(wt + phase).
template <typename T>
AtcGrads<T> atc_backward(const AtcParams<T>& p, const TimeAxis& times, const BasicTensor3<T>& upstream);

/// Closed-form harmonic regression warm start over observed samples.
/// Pixels with fewer than 3 samples or an unidentifiable harmonic fall back to their sample mean;
/// unobserved pixels take the mean `a` over pixels with at least one observation.
template <typename T>
AtcParams<T> atc_init(const BasicTensor3<T>& obs, const Mask3& mask, const TimeAxis& times);

/// b >= 0 and phase in (-pi, pi]; forward values unchanged.
template <typename T>
AtcParams<T> canonicalize(const AtcParams<T>& p);

/// Wraps an angle to (-pi, pi].
double wrap_phase(double x);

}  // namespace pgrecon

#include "pgrecon/amplify.hpp"

#include <vector>

#include "pgrecon/grid.hpp"

namespace pgrecon {

AmpWeights<float> amp_init(int height, int width) { return {Tensor3(height, width, 1)}; }

template <typename T>
void amplify_forward_accumulate(const AmpWeights<T>& w, const BasicTensor3<T>& tc, BasicTensor3<T>& out) {
    require_same_shape(w.w, tc.height(), tc.width(), 1, "amplify weights");
    require_same_shape(out, tc.height(), tc.width(), tc.channels(), "amplify output");
    const std::size_t n = tc.plane_size();
    parallel_for(0, tc.channels(), [&](int c) {
        const auto src = tc.plane(c);
        auto dst = out.plane(c);
        for (std::size_t k = 0; k < n; ++k) dst[k] += w.w[k] * src[k];
    });
}

template <typename T>
BasicTensor3<T> amplify_forward(const AmpWeights<T>& w, const BasicTensor3<T>& tc) {
    BasicTensor3<T> out(tc.height(), tc.width(), tc.channels(), T(0), tc.unit());
    amplify_forward_accumulate(w, tc, out);
    return out;
}

template <typename T>
BasicTensor3<T> amplify_backward(const AmpWeights<T>& w, const BasicTensor3<T>& tc,
                                 const BasicTensor3<T>& upstream) {
    require_same_shape(w.w, tc.height(), tc.width(), 1, "amplify weights");
    require_same_shape(upstream, tc.height(), tc.width(), tc.channels(), "amplify upstream");
    const std::size_t n = tc.plane_size();
    std::vector<double> acc(n, 0.0);
    for (int c = 0; c < tc.channels(); ++c) {
        const auto src = tc.plane(c);
        const auto up = upstream.plane(c);
        for (std::size_t k = 0; k < n; ++k) acc[k] += static_cast<double>(up[k]) * src[k];
    }
    BasicTensor3<T> g(tc.height(), tc.width(), 1);
    for (std::size_t k = 0; k < n; ++k) g[k] = static_cast<T>(acc[k]);
    return g;
}

Tensor3 driver_temporal_mean(const Tensor3& tc) {
    const std::size_t n = tc.plane_size();
    std::vector<double> acc(n, 0.0);
    for (int c = 0; c < tc.channels(); ++c) {
        const auto src = tc.plane(c);
        for (std::size_t k = 0; k < n; ++k) acc[k] += src[k];
    }
    Tensor3 mean(tc.height(), tc.width(), 1, 0.0f, tc.unit());
    for (std::size_t k = 0; k < n; ++k) mean[k] = static_cast<float>(acc[k] / tc.channels());
    return mean;
}

Tensor3 center_driver(const Tensor3& tc, const Tensor3& mean) {
    require_same_shape(mean, tc.height(), tc.width(), 1, "driver mean");
    Tensor3 out = tc;
    const std::size_t n = tc.plane_size();
    for (int c = 0; c < tc.channels(); ++c) {
        auto dst = out.plane(c);
        for (std::size_t k = 0; k < n; ++k) dst[k] -= mean[k];
    }
    return out;
}

#define PGRECON_INSTANTIATE_AMP(T)                                                                            \
    template BasicTensor3<T> amplify_forward(const AmpWeights<T>&, const BasicTensor3<T>&);                  \
    template void amplify_forward_accumulate(const AmpWeights<T>&, const BasicTensor3<T>&, BasicTensor3<T>&); \
    template BasicTensor3<T> amplify_backward(const AmpWeights<T>&, const BasicTensor3<T>&, const BasicTensor3<T>&);

PGRECON_INSTANTIATE_AMP(float)
PGRECON_INSTANTIATE_AMP(double)

}  // namespace pgrecon

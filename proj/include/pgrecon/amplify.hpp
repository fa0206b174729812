#pragma once

#include "pgrecon/tensor.hpp"

namespace pgrecon {

/// Per-pixel multiplicative weight applied to the fine-grid driver series.
template <typename T>
struct AmpWeights {
    BasicTensor3<T> w;  // H x W x 1, dimensionless

    template <typename U>
    AmpWeights<U> cast() const {
        return {w.template cast<U>()};
    }
};

/// w = 0 everywhere.
AmpWeights<float> amp_init(int height, int width);

template <typename T>
BasicTensor3<T> amplify_forward(const AmpWeights<T>& w, const BasicTensor3<T>& tc);

/// out += w * tc.
template <typename T>
void amplify_forward_accumulate(const AmpWeights<T>& w, const BasicTensor3<T>& tc, BasicTensor3<T>& out);

/// grad_w(i, j) = sum_t upstream(i, j, t) * tc(i, j, t), summed in channel order.
template <typename T>
BasicTensor3<T> amplify_backward(const AmpWeights<T>& w, const BasicTensor3<T>& tc, const BasicTensor3<T>& upstream);

/// Per-pixel temporal mean of the driver, H x W x 1.
Tensor3 driver_temporal_mean(const Tensor3& tc);

/// tc(i, j, t) - mean(i, j); used when the driver-centering option is on.
Tensor3 center_driver(const Tensor3& tc, const Tensor3& mean);

}  // namespace pgrecon

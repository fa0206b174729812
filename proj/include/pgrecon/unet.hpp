#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pgrecon/tensor.hpp"

namespace pgrecon {

/// Three-level U-Net: two 3x3 convs per level at widths base, 2*base, 4*base; 2x2 max-pool
/// down; nearest-neighbour 2x upsample + skip concat + two 3x3 convs up; linear 1x1 head.
struct UNetConfig {
    int in_channels = 1;
    int out_channels = 1;
    int base_width = 16;
    int depth = 3;

    void validate() const;
    int width(int level) const { return base_width << level; }

    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

enum class Layer : int { enc1a, enc1b, enc2a, enc2b, enc3a, enc3b, dec2a, dec2b, dec1a, dec1b, head };
inline constexpr int kLayerCount = 11;

const char* layer_name(int layer);

/// Kernel layout [out][in][ky][kx].
template <typename T>
struct ConvLayer {
    int out = 0;
    int in = 0;
    int k = 0;
    std::vector<T> weight;
    std::vector<T> bias;

    std::size_t weight_index(int o, int i, int ky, int kx) const {
        return ((static_cast<std::size_t>(o) * in + i) * k + ky) * k + kx;
    }
};

template <typename T>
struct UNetWeights {
    UNetConfig cfg;
    std::array<ConvLayer<T>, kLayerCount> layers;

    ConvLayer<T>& operator[](Layer l) { return layers[static_cast<int>(l)]; }
    const ConvLayer<T>& operator[](Layer l) const { return layers[static_cast<int>(l)]; }

    std::size_t parameter_count() const;
    /// Zero-valued weights with the layer shapes implied by `cfg`.
    static UNetWeights zeros(const UNetConfig& cfg);

    template <typename U>
    UNetWeights<U> cast() const {
        UNetWeights<U> out;
        out.cfg = cfg;
        for (int l = 0; l < kLayerCount; ++l) {
            const auto& src = layers[static_cast<std::size_t>(l)];
            auto& dst = out.layers[static_cast<std::size_t>(l)];
            dst.out = src.out;
            dst.in = src.in;
            dst.k = src.k;
            dst.weight.assign(src.weight.begin(), src.weight.end());
            dst.bias.assign(src.bias.begin(), src.bias.end());
        }
        return out;
    }

    /// Visits every scalar parameter in a fixed order (layer, weights then bias).
    template <typename F>
    void for_each_parameter(F&& f) {
        for (auto& layer : layers) {
            for (auto& v : layer.weight) f(v);
            for (auto& v : layer.bias) f(v);
        }
    }
};

/// Interior kernels ~ N(0, 2 / fan_in) from `seed`; biases zero. The head is zero unless
/// `zero_head` is false, in which case it is drawn like the interior kernels.
UNetWeights<float> unet_init(const UNetConfig& cfg, std::uint64_t seed, bool zero_head = true);

/// Forward intermediates kept for the backward pass.
template <typename T>
struct UNetCache {
    BasicTensor3<T> x;
    BasicTensor3<T> e1a, e1b, p1, e2a, e2b, p2, e3a, e3b;
    BasicTensor3<T> cat2, d2a, d2b, cat1, d1a, d1b;
    std::vector<std::uint8_t> arg1, arg2;
};

/// x is H x W x in_channels (H, W >= 4). Inputs are zero-padded bottom/right to multiples of 4
/// internally; the H x W x out_channels result is cropped back.
template <typename T>
BasicTensor3<T> unet_forward(const UNetWeights<T>& wts, const BasicTensor3<T>& x, UNetCache<T>* cache = nullptr);

/// Exact reverse-mode gradients of sum(upstream * unet_forward(x)) w.r.t. every weight.
/// Max-pool routes to the first maximal element in row-major order. Pass the cache filled by
/// unet_forward on the same (wts, x) to skip the recompute.
template <typename T>
UNetWeights<T> unet_backward(const UNetWeights<T>& wts, const BasicTensor3<T>& x, const BasicTensor3<T>& upstream,
                             const UNetCache<T>* cache = nullptr);

/// Per-channel z-score statistics of the static feature stack.
struct FeatureNorm {
    std::vector<float> mean;
    std::vector<float> scale;

    friend bool operator==(const FeatureNorm&, const FeatureNorm&) = default;
};

FeatureNorm fit_feature_norm(const Tensor3& x);
Tensor3 apply_feature_norm(const Tensor3& x, const FeatureNorm& norm);

}  // namespace pgrecon

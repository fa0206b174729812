#include "pgrecon/unet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pgrecon/grid.hpp"

namespace pgrecon {

namespace {

constexpr const char* kLayerNames[kLayerCount] = {"enc1a", "enc1b", "enc2a", "enc2b", "enc3a", "enc3b",
                                                  "dec2a", "dec2b", "dec1a", "dec1b", "head"};

int round_up4(int n) { return (n + 3) / 4 * 4; }

template <typename T>
BasicTensor3<T> conv_forward(const ConvLayer<T>& layer, const BasicTensor3<T>& in, bool relu) {
    const int h = in.height();
    const int w = in.width();
    const int pad = layer.k / 2;
    BasicTensor3<T> out(h, w, layer.out);
    parallel_for(0, layer.out, [&](int o) {
        auto dst = out.plane(o);
        std::fill(dst.begin(), dst.end(), layer.bias[static_cast<std::size_t>(o)]);
        for (int i = 0; i < layer.in; ++i) {
            const auto src = in.plane(i);
            for (int ky = 0; ky < layer.k; ++ky) {
                const int dy = ky - pad;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(h, h - dy);
                for (int kx = 0; kx < layer.k; ++kx) {
                    const int dx = kx - pad;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    const T wv = layer.weight[layer.weight_index(o, i, ky, kx)];
                    for (int y = y0; y < y1; ++y) {
                        T* drow = dst.data() + static_cast<std::size_t>(y) * w;
                        const T* srow = src.data() + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) drow[x] += wv * srow[x];
                    }
                }
            }
        }
        if (relu) {
            for (auto& v : dst) v = std::max(v, T(0));
        }
    });
    return out;
}

// Accumulates weight/bias gradients into `grad` and, when `gin` is non-null, the input gradient.
template <typename T>
void conv_backward(const ConvLayer<T>& layer, const BasicTensor3<T>& in, const BasicTensor3<T>& gout,
                   ConvLayer<T>& grad, BasicTensor3<T>* gin) {
    const int h = in.height();
    const int w = in.width();
    const int pad = layer.k / 2;
    const std::size_t n = in.plane_size();

    parallel_for(0, layer.out, [&](int o) {
        const auto g = gout.plane(o);
        double bsum = 0.0;
        for (std::size_t k = 0; k < n; ++k) bsum += g[k];
        grad.bias[static_cast<std::size_t>(o)] = static_cast<T>(bsum);
        for (int i = 0; i < layer.in; ++i) {
            const auto src = in.plane(i);
            for (int ky = 0; ky < layer.k; ++ky) {
                const int dy = ky - pad;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(h, h - dy);
                for (int kx = 0; kx < layer.k; ++kx) {
                    const int dx = kx - pad;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    double s = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const T* grow = g.data() + static_cast<std::size_t>(y) * w;
                        const T* srow = src.data() + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) s += static_cast<double>(grow[x]) * srow[x];
                    }
                    grad.weight[layer.weight_index(o, i, ky, kx)] = static_cast<T>(s);
                }
            }
        }
    });

    if (gin == nullptr) return;
    *gin = BasicTensor3<T>(h, w, layer.in);
    parallel_for(0, layer.in, [&](int i) {
        std::vector<double> acc(n, 0.0);
        for (int o = 0; o < layer.out; ++o) {
            const auto g = gout.plane(o);
            for (int ky = 0; ky < layer.k; ++ky) {
                const int dy = ky - pad;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(h, h - dy);
                for (int kx = 0; kx < layer.k; ++kx) {
                    const int dx = kx - pad;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    const double wv = layer.weight[layer.weight_index(o, i, ky, kx)];
                    for (int y = y0; y < y1; ++y) {
                        const T* grow = g.data() + static_cast<std::size_t>(y) * w;
                        double* arow = acc.data() + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) arow[x] += wv * grow[x];
                    }
                }
            }
        }
        auto dst = gin->plane(i);
        for (std::size_t k = 0; k < n; ++k) dst[k] = static_cast<T>(acc[k]);
    });
}

template <typename T>
void relu_backward(BasicTensor3<T>& g, const BasicTensor3<T>& post) {
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(post[k] > T(0))) g[k] = T(0);
    }
}

template <typename T>
BasicTensor3<T> maxpool2(const BasicTensor3<T>& in, std::vector<std::uint8_t>& arg) {
    const int h = in.height() / 2;
    const int w = in.width() / 2;
    BasicTensor3<T> out(h, w, in.channels());
    arg.assign(out.size(), 0);
    for (int c = 0; c < in.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                // Candidates in row-major order; strict '>' keeps the first maximum.
                T best = in(2 * y, 2 * x, c);
                std::uint8_t which = 0;
                const T cand[3] = {in(2 * y, 2 * x + 1, c), in(2 * y + 1, 2 * x, c), in(2 * y + 1, 2 * x + 1, c)};
                for (std::uint8_t q = 0; q < 3; ++q) {
                    if (cand[q] > best) {
                        best = cand[q];
                        which = static_cast<std::uint8_t>(q + 1);
                    }
                }
                out(y, x, c) = best;
                arg[out.index(y, x, c)] = which;
            }
        }
    }
    return out;
}

template <typename T>
void maxpool2_backward(const BasicTensor3<T>& gout, const std::vector<std::uint8_t>& arg, BasicTensor3<T>& gin) {
    for (int c = 0; c < gout.channels(); ++c) {
        for (int y = 0; y < gout.height(); ++y) {
            for (int x = 0; x < gout.width(); ++x) {
                const std::size_t k = gout.index(y, x, c);
                const int dy = arg[k] / 2;
                const int dx = arg[k] % 2;
                gin(2 * y + dy, 2 * x + dx, c) += gout[k];
            }
        }
    }
}

template <typename T>
BasicTensor3<T> upsample2(const BasicTensor3<T>& in) {
    BasicTensor3<T> out(in.height() * 2, in.width() * 2, in.channels());
    for (int c = 0; c < in.channels(); ++c) {
        for (int y = 0; y < out.height(); ++y) {
            for (int x = 0; x < out.width(); ++x) out(y, x, c) = in(y / 2, x / 2, c);
        }
    }
    return out;
}

template <typename T>
BasicTensor3<T> upsample2_backward(const BasicTensor3<T>& gout, int first_channel, int channels) {
    const int h = gout.height() / 2;
    const int w = gout.width() / 2;
    BasicTensor3<T> gin(h, w, channels);
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int cc = first_channel + c;
                const double s = static_cast<double>(gout(2 * y, 2 * x, cc)) + gout(2 * y, 2 * x + 1, cc) +
                                 gout(2 * y + 1, 2 * x, cc) + gout(2 * y + 1, 2 * x + 1, cc);
                gin(y, x, c) = static_cast<T>(s);
            }
        }
    }
    return gin;
}

template <typename T>
BasicTensor3<T> concat(const BasicTensor3<T>& a, const BasicTensor3<T>& b) {
    BasicTensor3<T> out(a.height(), a.width(), a.channels() + b.channels());
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

// Adds channels [first, first + dst.channels()) of `src` into `dst`.
template <typename T>
void add_channels(BasicTensor3<T>& dst, const BasicTensor3<T>& src, int first) {
    const std::size_t n = dst.plane_size();
    for (int c = 0; c < dst.channels(); ++c) {
        const auto s = src.plane(first + c);
        auto d = dst.plane(c);
        for (std::size_t k = 0; k < n; ++k) d[k] += s[k];
    }
}

template <typename T>
void fill_cache(const UNetWeights<T>& wts, const BasicTensor3<T>& x, UNetCache<T>& c) {
    const int hp = round_up4(x.height());
    const int wp = round_up4(x.width());
    c.x = BasicTensor3<T>(hp, wp, x.channels());
    for (int ch = 0; ch < x.channels(); ++ch) {
        for (int i = 0; i < x.height(); ++i) {
            for (int j = 0; j < x.width(); ++j) c.x(i, j, ch) = x(i, j, ch);
        }
    }
    c.e1a = conv_forward(wts[Layer::enc1a], c.x, true);
    c.e1b = conv_forward(wts[Layer::enc1b], c.e1a, true);
    c.p1 = maxpool2(c.e1b, c.arg1);
    c.e2a = conv_forward(wts[Layer::enc2a], c.p1, true);
    c.e2b = conv_forward(wts[Layer::enc2b], c.e2a, true);
    c.p2 = maxpool2(c.e2b, c.arg2);
    c.e3a = conv_forward(wts[Layer::enc3a], c.p2, true);
    c.e3b = conv_forward(wts[Layer::enc3b], c.e3a, true);
    c.cat2 = concat(upsample2(c.e3b), c.e2b);
    c.d2a = conv_forward(wts[Layer::dec2a], c.cat2, true);
    c.d2b = conv_forward(wts[Layer::dec2b], c.d2a, true);
    c.cat1 = concat(upsample2(c.d2b), c.e1b);
    c.d1a = conv_forward(wts[Layer::dec1a], c.cat1, true);
    c.d1b = conv_forward(wts[Layer::dec1b], c.d1a, true);
}

template <typename T>
void check_input(const UNetWeights<T>& wts, const BasicTensor3<T>& x) {
    if (x.channels() != wts.cfg.in_channels) {
        throw PreconditionError("unet input has " + std::to_string(x.channels()) + " channels, config expects " +
                                std::to_string(wts.cfg.in_channels));
    }
    if (x.height() < 4 || x.width() < 4) throw PreconditionError("unet input must be at least 4x4");
}

}  // namespace

const char* layer_name(int layer) { return kLayerNames[layer]; }

void UNetConfig::validate() const {
    if (depth != 3) throw PreconditionError("unet depth must be 3");
    if (base_width < 1) throw PreconditionError("unet base_width must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw PreconditionError("unet channel counts must be >= 1");
}

template <typename T>
std::size_t UNetWeights<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

template <typename T>
UNetWeights<T> UNetWeights<T>::zeros(const UNetConfig& cfg) {
    cfg.validate();
    const int w1 = cfg.width(0);
    const int w2 = cfg.width(1);
    const int w3 = cfg.width(2);
    const std::array<std::array<int, 3>, kLayerCount> shapes = {{
        {w1, cfg.in_channels, 3},
        {w1, w1, 3},
        {w2, w1, 3},
        {w2, w2, 3},
        {w3, w2, 3},
        {w3, w3, 3},
        {w2, w3 + w2, 3},
        {w2, w2, 3},
        {w1, w2 + w1, 3},
        {w1, w1, 3},
        {cfg.out_channels, w1, 1},
    }};
    UNetWeights<T> out;
    out.cfg = cfg;
    for (int l = 0; l < kLayerCount; ++l) {
        auto& layer = out.layers[static_cast<std::size_t>(l)];
        layer.out = shapes[static_cast<std::size_t>(l)][0];
        layer.in = shapes[static_cast<std::size_t>(l)][1];
        layer.k = shapes[static_cast<std::size_t>(l)][2];
        layer.weight.assign(static_cast<std::size_t>(layer.out) * layer.in * layer.k * layer.k, T(0));
        layer.bias.assign(static_cast<std::size_t>(layer.out), T(0));
    }
    return out;
}

UNetWeights<float> unet_init(const UNetConfig& cfg, std::uint64_t seed, bool zero_head) {
    auto wts = UNetWeights<float>::zeros(cfg);
    std::mt19937_64 rng(seed);
    for (int l = 0; l < kLayerCount; ++l) {
        if (l == static_cast<int>(Layer::head) && zero_head) continue;
        auto& layer = wts.layers[static_cast<std::size_t>(l)];
        const double fan_in = static_cast<double>(layer.in) * layer.k * layer.k;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : layer.weight) v = static_cast<float>(dist(rng));
    }
    return wts;
}

template <typename T>
BasicTensor3<T> unet_forward(const UNetWeights<T>& wts, const BasicTensor3<T>& x, UNetCache<T>* cache) {
    check_input(wts, x);
    UNetCache<T> local;
    UNetCache<T>& c = cache ? *cache : local;
    fill_cache(wts, x, c);
    const auto full = conv_forward(wts[Layer::head], c.d1b, false);
    BasicTensor3<T> out(x.height(), x.width(), wts.cfg.out_channels, T(0), Unit::kelvin);
    for (int ch = 0; ch < out.channels(); ++ch) {
        for (int i = 0; i < out.height(); ++i) {
            for (int j = 0; j < out.width(); ++j) out(i, j, ch) = full(i, j, ch);
        }
    }
    return out;
}

template <typename T>
UNetWeights<T> unet_backward(const UNetWeights<T>& wts, const BasicTensor3<T>& x, const BasicTensor3<T>& upstream,
                             const UNetCache<T>* cache) {
    check_input(wts, x);
    require_same_shape(upstream, x.height(), x.width(), wts.cfg.out_channels, "unet upstream");
    UNetCache<T> local;
    if (cache == nullptr) {
        fill_cache(wts, x, local);
        cache = &local;
    }
    const UNetCache<T>& c = *cache;
    auto grads = UNetWeights<T>::zeros(wts.cfg);

    BasicTensor3<T> g_out(c.x.height(), c.x.width(), wts.cfg.out_channels);
    for (int ch = 0; ch < upstream.channels(); ++ch) {
        for (int i = 0; i < upstream.height(); ++i) {
            for (int j = 0; j < upstream.width(); ++j) g_out(i, j, ch) = upstream(i, j, ch);
        }
    }

    BasicTensor3<T> g, g_next;
    conv_backward(wts[Layer::head], c.d1b, g_out, grads[Layer::head], &g);
    relu_backward(g, c.d1b);
    conv_backward(wts[Layer::dec1b], c.d1a, g, grads[Layer::dec1b], &g_next);
    relu_backward(g_next, c.d1a);
    BasicTensor3<T> g_cat1;
    conv_backward(wts[Layer::dec1a], c.cat1, g_next, grads[Layer::dec1a], &g_cat1);

    const int w1 = wts.cfg.width(0);
    const int w2 = wts.cfg.width(1);
    const int w3 = wts.cfg.width(2);
    BasicTensor3<T> g_s1(c.e1b.height(), c.e1b.width(), w1);
    add_channels(g_s1, g_cat1, w2);

    g = upsample2_backward(g_cat1, 0, w2);
    relu_backward(g, c.d2b);
    conv_backward(wts[Layer::dec2b], c.d2a, g, grads[Layer::dec2b], &g_next);
    relu_backward(g_next, c.d2a);
    BasicTensor3<T> g_cat2;
    conv_backward(wts[Layer::dec2a], c.cat2, g_next, grads[Layer::dec2a], &g_cat2);
    BasicTensor3<T> g_s2(c.e2b.height(), c.e2b.width(), w2);
    add_channels(g_s2, g_cat2, w3);

    g = upsample2_backward(g_cat2, 0, w3);
    relu_backward(g, c.e3b);
    conv_backward(wts[Layer::enc3b], c.e3a, g, grads[Layer::enc3b], &g_next);
    relu_backward(g_next, c.e3a);
    conv_backward(wts[Layer::enc3a], c.p2, g_next, grads[Layer::enc3a], &g);
    maxpool2_backward(g, c.arg2, g_s2);

    relu_backward(g_s2, c.e2b);
    conv_backward(wts[Layer::enc2b], c.e2a, g_s2, grads[Layer::enc2b], &g_next);
    relu_backward(g_next, c.e2a);
    conv_backward(wts[Layer::enc2a], c.p1, g_next, grads[Layer::enc2a], &g);
    maxpool2_backward(g, c.arg1, g_s1);

    relu_backward(g_s1, c.e1b);
    conv_backward(wts[Layer::enc1b], c.e1a, g_s1, grads[Layer::enc1b], &g_next);
    relu_backward(g_next, c.e1a);
    conv_backward(wts[Layer::enc1a], c.x, g_next, grads[Layer::enc1a], static_cast<BasicTensor3<T>*>(nullptr));
    return grads;
}

FeatureNorm fit_feature_norm(const Tensor3& x) {
    FeatureNorm norm;
    const std::size_t n = x.plane_size();
    for (int c = 0; c < x.channels(); ++c) {
        const auto p = x.plane(c);
        double sum = 0.0;
        for (float v : p) sum += v;
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (float v : p) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        norm.mean.push_back(static_cast<float>(mean));
        norm.scale.push_back(sd > 0.0 ? static_cast<float>(sd) : 1.0f);
    }
    return norm;
}

Tensor3 apply_feature_norm(const Tensor3& x, const FeatureNorm& norm) {
    if (norm.mean.size() != static_cast<std::size_t>(x.channels()) || norm.scale.size() != norm.mean.size()) {
        throw PreconditionError("feature normalization has " + std::to_string(norm.mean.size()) +
                                " channels, features have " + std::to_string(x.channels()));
    }
    Tensor3 out(x.height(), x.width(), x.channels(), 0.0f, Unit::dimensionless);
    for (int c = 0; c < x.channels(); ++c) {
        const auto src = x.plane(c);
        auto dst = out.plane(c);
        const auto m = norm.mean[static_cast<std::size_t>(c)];
        const auto s = norm.scale[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = (src[k] - m) / s;
    }
    return out;
}

template struct UNetWeights<float>;
template struct UNetWeights<double>;
template BasicTensor3<float> unet_forward(const UNetWeights<float>&, const BasicTensor3<float>&, UNetCache<float>*);
template BasicTensor3<double> unet_forward(const UNetWeights<double>&, const BasicTensor3<double>&,
                                           UNetCache<double>*);
template UNetWeights<float> unet_backward(const UNetWeights<float>&, const BasicTensor3<float>&,
                                          const BasicTensor3<float>&, const UNetCache<float>*);
template UNetWeights<double> unet_backward(const UNetWeights<double>&, const BasicTensor3<double>&,
                                           const BasicTensor3<double>&, const UNetCache<double>*);

}  // namespace pgrecon

#include "pgrecon/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pgrecon/synth.hpp"
#include "pgrecon/trainer.hpp"

namespace pgrecon {

namespace {

constexpr int kMaxShrinks = 8;

struct Probe {
    double loss;
    std::vector<std::uint8_t> pattern;
};

void append_active(std::vector<std::uint8_t>& out, const Tensor3d& t) {
    for (double v : t.values()) out.push_back(v > 0.0 ? 1 : 0);
}

class Objective {
public:
    Objective(ModelParams<double>& p, const ModelInputs<double>& in, const Tensor3d& obs, const Mask3& mask)
        : p_(p), in_(in), obs_(obs), mask_(mask) {}

    // Masked L1 with the residual signs of the unperturbed model held fixed (the linear piece the
    // subgradient describes), plus the ReLU activity and max-pool routing of the net.
    Probe probe(const std::vector<std::int8_t>& signs) const {
        UNetCache<double> cache;
        const auto pred = model_forward(ModelKind::full, p_, in_, &cache);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < pred.size(); ++k) {
            if (!mask_[k]) continue;
            sum += signs[n++] * (pred[k] - obs_[k]);
        }
        Probe r{sum / static_cast<double>(n), {}};
        for (const Tensor3d* t : {&cache.e1a, &cache.e1b, &cache.e2a, &cache.e2b, &cache.e3a, &cache.e3b, &cache.d2a,
                                  &cache.d2b, &cache.d1a, &cache.d1b}) {
            append_active(r.pattern, *t);
        }
        r.pattern.insert(r.pattern.end(), cache.arg1.begin(), cache.arg1.end());
        r.pattern.insert(r.pattern.end(), cache.arg2.begin(), cache.arg2.end());
        return r;
    }

    std::vector<std::int8_t> residual_signs() const {
        const auto pred = model_forward(ModelKind::full, p_, in_);
        std::vector<std::int8_t> signs;
        for (std::size_t k = 0; k < pred.size(); ++k) {
            if (mask_[k]) signs.push_back(pred[k] > obs_[k] ? 1 : (pred[k] < obs_[k] ? -1 : 0));
        }
        return signs;
    }

    double central_difference(double& param, double step) const {
        const double saved = param;
        const auto signs = residual_signs();
        const Probe base = probe(signs);
        double h = step;
        double fd = 0.0;
        for (int attempt = 0; attempt <= kMaxShrinks; ++attempt) {
            param = saved + h;
            const Probe plus = probe(signs);
            param = saved - h;
            const Probe minus = probe(signs);
            param = saved;
            fd = (plus.loss - minus.loss) / (2.0 * h);
            if (plus.pattern == base.pattern && minus.pattern == base.pattern) break;
            h *= 0.25;
        }
        return fd;
    }

private:
    ModelParams<double>& p_;
    const ModelInputs<double>& in_;
    const Tensor3d& obs_;
    const Mask3& mask_;
};

std::vector<double*> group_params(ModelParams<double>& p, ParamGroup g) {
    std::vector<double*> out;
    auto add_all = [&](std::vector<double>& v) {
        for (auto& x : v) out.push_back(&x);
    };
    switch (g) {
        case ParamGroup::a: add_all(p.atc.a.values()); break;
        case ParamGroup::b: add_all(p.atc.b.values()); break;
        case ParamGroup::phase: add_all(p.atc.phase.values()); break;
        case ParamGroup::w: add_all(p.amp.w.values()); break;
        case ParamGroup::conv: p.unet.for_each_parameter([&](double& x) { out.push_back(&x); }); break;
    }
    return out;
}

double step_for(ParamGroup g, double value) {
    const double scale = std::max(1.0, std::abs(value));
    return g == ParamGroup::conv ? 1e-3 * scale : 1e-6 * scale;
}

}  // namespace

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
    SynthConfig sc;
    sc.height = opts.height;
    sc.width = opts.width;
    sc.channels = opts.channels;
    sc.feature_channels = opts.feature_channels;
    sc.coarse_height = std::max(1, opts.height / 4);
    sc.coarse_width = std::max(1, opts.width / 4);
    sc.correlation_length = 2.0;
    sc.p_day = 1.0;
    sc.p_pix = 0.7;
    sc.seed = opts.seed;
    const SynthScene scene = gen_scene(sc);
    const Mask3 mask = scene.mask();

    // Parameters away from the warm start so every branch of the model carries signal.
    std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    ModelParams<double> p;
    p.atc = scene.atc.cast<double>();
    for (auto& v : p.atc.a.values()) v += 2.0 * jitter(rng);
    for (auto& v : p.atc.b.values()) v += 2.0 * jitter(rng);
    for (auto& v : p.atc.phase.values()) v += 0.3 * jitter(rng);
    p.amp.w = Tensor3d(sc.height, sc.width, 1);
    for (auto& v : p.amp.w.values()) v = 0.5 + 0.4 * jitter(rng);
    const UNetConfig ucfg{sc.feature_channels, sc.channels, opts.base_width, 3};
    p.unet = unet_init(ucfg, opts.seed, false).cast<double>();
    for (auto& layer : p.unet.layers) {
        for (auto& b : layer.bias) b = 0.1 * jitter(rng);
    }
    // Pull the annual mean down so predictions straddle the observations.
    const auto drift = model_forward(ModelKind::full, p,
                                     ModelInputs<double>{scene.times, scene.tc_fine.cast<double>(),
                                                         apply_feature_norm(scene.features,
                                                                            fit_feature_norm(scene.features))
                                                             .cast<double>()});
    const Tensor3d obs = scene.obs.cast<double>();
    {
        const std::size_t n = drift.plane_size();
        for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            int cnt = 0;
            for (int c = 0; c < sc.channels; ++c) {
                const std::size_t idx = static_cast<std::size_t>(c) * n + k;
                if (mask[idx]) {
                    s += drift[idx] - obs[idx];
                    ++cnt;
                }
            }
            if (cnt > 0) p.atc.a[k] -= s / cnt;
        }
    }

    const ModelInputs<double> in{scene.times, scene.tc_fine.cast<double>(),
                                 apply_feature_norm(scene.features, fit_feature_norm(scene.features)).cast<double>()};

    UNetCache<double> cache;
    const auto pred = model_forward(ModelKind::full, p, in, &cache);
    const auto lg = masked_l1(pred, obs, mask);
    ModelParams<double> grads = model_backward(ModelKind::full, p, in, lg.grad, &cache);
    if (opts.flip_amp_sign) {
        for (auto& v : grads.amp.w.values()) v = -v;
    }

    Objective objective(p, in, obs, mask);
    GradcheckReport report;
    report.pass = true;
    for (int gi = 0; gi < kGroupCount; ++gi) {
        const auto group = static_cast<ParamGroup>(gi);
        const auto params = group_params(p, group);
        const auto analytic = group_params(grads, group);
        GroupCheck gc;
        gc.group = group_name(group);
        for (std::size_t k = 0; k < params.size(); ++k) {
            const double fd = objective.central_difference(*params[k], step_for(group, *params[k]));
            gc.worst_rel_err = std::max(gc.worst_rel_err, relative_error(*analytic[k], fd));
            ++gc.checked;
        }
        gc.pass = gc.worst_rel_err < opts.tolerance;
        report.pass = report.pass && gc.pass;
        report.groups.push_back(gc);
    }
    return report;
}

}  // namespace pgrecon

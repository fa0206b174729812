#include "pgrecon/trainer.hpp"

#include <cmath>

namespace pgrecon {

namespace {

constexpr const char* kGroupNames[kGroupCount] = {"a", "b", "phase", "w", "conv"};

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, ModelKind kind) : cfg_(cfg), kind_(kind) {}

    void step(ModelParams<float>& p, const ModelParams<float>& g, int t) {
        if (uses_atc(kind_)) {
            update(p.atc.a.values(), g.atc.a.values(), ParamGroup::a, 0, t);
            update(p.atc.b.values(), g.atc.b.values(), ParamGroup::b, 1, t);
            update(p.atc.phase.values(), g.atc.phase.values(), ParamGroup::phase, 2, t);
        }
        if (uses_driver(kind_)) update(p.amp.w.values(), g.amp.w.values(), ParamGroup::w, 3, t);
        if (uses_resid(kind_)) {
            for (int l = 0; l < kLayerCount; ++l) {
                auto& dst = p.unet.layers[static_cast<std::size_t>(l)];
                const auto& src = g.unet.layers[static_cast<std::size_t>(l)];
                update(dst.weight, src.weight, ParamGroup::conv, 4 + 2 * l, t);
                update(dst.bias, src.bias, ParamGroup::conv, 5 + 2 * l, t);
            }
        }
    }

private:
    void update(std::vector<float>& p, const std::vector<float>& g, ParamGroup group, int slot, int t) {
        adam_step<float>(p, g, moments_[static_cast<std::size_t>(slot)], cfg_.group_lr(group), cfg_.adam, t,
                         group_name(group));
    }

    const TrainConfig& cfg_;
    ModelKind kind_;
    std::array<AdamMoments, 4 + 2 * kLayerCount> moments_;
};

// Head bias starts at the per-day training mean (global mean on days without training data) so the
// random head only has to learn deviations.
void seed_head_bias(UNetWeights<float>& net, const Tensor3& obs, const Mask3& train) {
    const std::size_t plane = obs.plane_size();
    std::vector<double> sum(static_cast<std::size_t>(obs.channels()), 0.0);
    std::vector<std::size_t> count(sum.size(), 0);
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < sum.size(); ++c) {
        for (std::size_t k = c * plane; k < (c + 1) * plane; ++k) {
            if (!train[k]) continue;
            sum[c] += obs[k];
            ++count[c];
        }
        total += sum[c];
        n += count[c];
    }
    auto& bias = net[Layer::head].bias;
    for (std::size_t c = 0; c < sum.size(); ++c) {
        bias[c] = static_cast<float>(count[c] > 0 ? sum[c] / static_cast<double>(count[c]) : total / static_cast<double>(n));
    }
}

}  // namespace

const char* group_name(ParamGroup g) { return kGroupNames[static_cast<int>(g)]; }

ParamGroup parse_group(const std::string& s) {
    for (int k = 0; k < kGroupCount; ++k) {
        if (s == kGroupNames[k]) return static_cast<ParamGroup>(k);
    }
    throw PreconditionError("unknown parameter group '" + s + "' (expected a|b|phase|w|conv)");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw PreconditionError("learning rate must be > 0");
    if (epochs < 1) throw PreconditionError("epochs must be >= 1");
    if (!(holdout > 0.0 && holdout < 1.0)) throw PreconditionError("holdout fraction must lie in (0, 1)");
    for (int k = 0; k < kGroupCount; ++k) {
        if (lr_override[static_cast<std::size_t>(k)] && !(*lr_override[static_cast<std::size_t>(k)] > 0.0)) {
            throw PreconditionError(std::string("learning rate override for group ") + kGroupNames[k] +
                                    " must be > 0");
        }
    }
    if (base_width < 1) throw PreconditionError("base_width must be >= 1");
}

ModelState init_model(ModelKind kind, const FitData& data, const Mask3& train, const TrainConfig& cfg) {
    cfg.validate();
    const int h = data.obs.height();
    const int w = data.obs.width();
    const int c = data.obs.channels();
    if (!train.same_shape(data.obs) || data.times.size() != c) {
        throw PreconditionError("fit: observations, mask and time axis dims disagree");
    }
    data.times.validate();
    if (train.popcount() == 0) throw PreconditionError("fit: training mask is empty");

    ModelState s;
    s.kind = kind;
    s.times = data.times;
    s.params.atc = uses_atc(kind) ? atc_init(data.obs, train, data.times) : AtcParams<float>(h, w);
    s.params.amp = amp_init(h, w);
    if (uses_driver(kind)) {
        require_same_shape(data.tc_fine, h, w, c, "fine driver");
        for (float v : data.tc_fine.values()) {
            if (std::isnan(v)) throw PreconditionError("fine driver contains NaN");
        }
        s.center_driver = cfg.center_driver;
        if (cfg.center_driver) s.driver_mean = driver_temporal_mean(data.tc_fine);
    }
    const int cx = uses_resid(kind) ? data.features.channels() : 1;
    s.unet_cfg = UNetConfig{cx, c, cfg.base_width, 3};
    if (uses_resid(kind)) {
        require_same_shape(data.features, h, w, cx, "features");
        for (float v : data.features.values()) {
            if (std::isnan(v)) throw PreconditionError("features contain NaN");
        }
        s.params.unet = unet_init(s.unet_cfg, cfg.seed, kind != ModelKind::naive);
        s.norm = fit_feature_norm(data.features);
        if (kind == ModelKind::naive) seed_head_bias(s.params.unet, data.obs, train);
    } else {
        s.params.unet = UNetWeights<float>::zeros(s.unet_cfg);
    }
    return s;
}

FitResult fit_model(ModelKind kind, const FitData& data, const Mask3& train, const TrainConfig& cfg,
                    const Mask3* test) {
    FitResult r{init_model(kind, data, train, cfg), {}};
    ModelState& s = r.model;
    if (test != nullptr && !test->same_shape(data.obs)) throw PreconditionError("fit: test mask dims disagree");
    const bool track_test = test != nullptr && test->popcount() > 0;

    const auto inputs = prepare_inputs(s, data.times, data.tc_fine, data.features);
    Optimizer opt(cfg, kind);
    r.history.train.reserve(static_cast<std::size_t>(cfg.epochs));

    UNetCache<float> cache;
    for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
        const auto pred = model_forward(kind, s.params, inputs, &cache);
        auto lg = masked_l1(pred, data.obs, train);
        if (!std::isfinite(lg.loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
        const std::optional<double> test_loss =
            track_test ? std::optional<double>(masked_l1_loss(pred, data.obs, *test)) : std::nullopt;
        if (epoch == 0) {
            r.history.initial_train = lg.loss;
            r.history.initial_test = test_loss;
        } else {
            r.history.train.push_back(lg.loss);
            if (test_loss) r.history.test.push_back(*test_loss);
        }
        if (epoch == cfg.epochs) break;
        const auto grads = model_backward(kind, s.params, inputs, lg.grad, &cache);
        opt.step(s.params, grads, epoch + 1);
    }
    return r;
}

FitResult fit(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const Tensor3& tc_fine,
              const Tensor3& features, const TrainConfig& cfg, const Mask3* test) {
    return fit_model(ModelKind::full, FitData{obs, times, tc_fine, features}, train, cfg, test);
}

Tensor3 reconstruct(const ModelState& model, const TimeAxis& times, const Tensor3& tc_fine, const Tensor3& features) {
    times.validate();
    const auto inputs = prepare_inputs(model, times, tc_fine, features);
    return model_forward(model.kind, model.params, inputs);
}

}  // namespace pgrecon

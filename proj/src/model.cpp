#include "pgrecon/model.hpp"

namespace pgrecon {

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::full: return "full";
        case ModelKind::atc: return "atc";
        case ModelKind::atc_era5: return "atc-era5";
        case ModelKind::naive: return "naive";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "full") return ModelKind::full;
    if (s == "atc") return ModelKind::atc;
    if (s == "atc-era5") return ModelKind::atc_era5;
    if (s == "naive") return ModelKind::naive;
    throw PreconditionError("unknown model kind '" + s + "' (expected full|atc|atc-era5|naive)");
}

ModelInputs<float> prepare_inputs(const ModelState& state, const TimeAxis& times, const Tensor3& tc_fine,
                                  const Tensor3& features) {
    ModelInputs<float> in{times, {}, {}};
    const int h = state.height();
    const int w = state.width();
    if (uses_driver(state.kind)) {
        require_same_shape(tc_fine, h, w, times.size(), "fine driver");
        in.driver = state.center_driver ? center_driver(tc_fine, state.driver_mean) : tc_fine;
    }
    if (uses_resid(state.kind)) {
        require_same_shape(features, h, w, state.unet_cfg.in_channels, "features");
        if (times.size() != state.unet_cfg.out_channels) {
            throw PreconditionError("residual net predicts " + std::to_string(state.unet_cfg.out_channels) +
                                    " time steps, time axis has " + std::to_string(times.size()));
        }
        in.features = apply_feature_norm(features, state.norm);
    }
    return in;
}

template <typename T>
BasicTensor3<T> model_forward(ModelKind kind, const ModelParams<T>& p, const ModelInputs<T>& in,
                              UNetCache<T>* cache) {
    const int h = p.atc.height();
    const int w = p.atc.width();
    BasicTensor3<T> out;
    if (uses_resid(kind)) {
        out = unet_forward(p.unet, in.features, cache);
        require_same_shape(out, h, w, in.times.size(), "residual output");
    } else {
        out = BasicTensor3<T>(h, w, in.times.size(), T(0), Unit::kelvin);
    }
    // Summation order: residual, annual cycle, driver term.
    if (uses_atc(kind)) atc_forward_accumulate(p.atc, in.times, out);
    if (uses_driver(kind)) amplify_forward_accumulate(p.amp, in.driver, out);
    return out;
}

template <typename T>
ModelParams<T> model_backward(ModelKind kind, const ModelParams<T>& p, const ModelInputs<T>& in,
                              const BasicTensor3<T>& upstream, const UNetCache<T>* cache) {
    const int h = p.atc.height();
    const int w = p.atc.width();
    ModelParams<T> g{AtcParams<T>(h, w), {BasicTensor3<T>(h, w, 1)}, UNetWeights<T>::zeros(p.unet.cfg)};
    if (uses_atc(kind)) {
        auto ga = atc_backward(p.atc, in.times, upstream);
        g.atc.a = std::move(ga.a);
        g.atc.b = std::move(ga.b);
        g.atc.phase = std::move(ga.phase);
    }
    if (uses_driver(kind)) g.amp.w = amplify_backward(p.amp, in.driver, upstream);
    if (uses_resid(kind)) g.unet = unet_backward(p.unet, in.features, upstream, cache);
    return g;
}

template BasicTensor3<float> model_forward(ModelKind, const ModelParams<float>&, const ModelInputs<float>&,
                                           UNetCache<float>*);
template BasicTensor3<double> model_forward(ModelKind, const ModelParams<double>&, const ModelInputs<double>&,
                                            UNetCache<double>*);
template ModelParams<float> model_backward(ModelKind, const ModelParams<float>&, const ModelInputs<float>&,
                                           const BasicTensor3<float>&, const UNetCache<float>*);
template ModelParams<double> model_backward(ModelKind, const ModelParams<double>&, const ModelInputs<double>&,
                                            const BasicTensor3<double>&, const UNetCache<double>*);

}  // namespace pgrecon

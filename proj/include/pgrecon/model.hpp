#pragma once

#include <string>

#include "pgrecon/amplify.hpp"
#include "pgrecon/atc.hpp"
#include "pgrecon/unet.hpp"

namespace pgrecon {

/// Which additive components a model carries.
enum class ModelKind : std::uint8_t {
    full = 0,      // annual cycle + amplified driver + residual net
    atc = 1,       // annual cycle only
    atc_era5 = 2,  // annual cycle + amplified driver
    naive = 3,     // residual net mapping features straight to temperature
};

const char* model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

inline bool uses_atc(ModelKind k) { return k != ModelKind::naive; }
inline bool uses_driver(ModelKind k) { return k == ModelKind::full || k == ModelKind::atc_era5; }
inline bool uses_resid(ModelKind k) { return k == ModelKind::full || k == ModelKind::naive; }

/// Learnable parameters; gradients reuse the same layout.
template <typename T>
struct ModelParams {
    AtcParams<T> atc;
    AmpWeights<T> amp;
    UNetWeights<T> unet;

    template <typename U>
    ModelParams<U> cast() const {
        return {atc.template cast<U>(), amp.template cast<U>(), unet.template cast<U>()};
    }
};

struct ModelState {
    ModelKind kind = ModelKind::full;
    UNetConfig unet_cfg;
    TimeAxis times;
    ModelParams<float> params;
    FeatureNorm norm;            // empty unless the kind uses the residual net
    bool center_driver = false;  // driver enters as tc - driver_mean
    Tensor3 driver_mean;         // H x W x 1, set only when center_driver

    int height() const { return params.atc.height(); }
    int width() const { return params.atc.width(); }
    int channels() const { return times.size(); }
};

/// Inputs after the state's preprocessing (driver centering, feature standardization).
template <typename T>
struct ModelInputs {
    TimeAxis times;
    BasicTensor3<T> driver;    // empty unless uses_driver
    BasicTensor3<T> features;  // empty unless uses_resid

    template <typename U>
    ModelInputs<U> cast() const {
        ModelInputs<U> out{times, {}, {}};
        if (!driver.empty()) out.driver = driver.template cast<U>();
        if (!features.empty()) out.features = features.template cast<U>();
        return out;
    }
};

ModelInputs<float> prepare_inputs(const ModelState& state, const TimeAxis& times, const Tensor3& tc_fine,
                                  const Tensor3& features);

template <typename T>
BasicTensor3<T> model_forward(ModelKind kind, const ModelParams<T>& p, const ModelInputs<T>& in,
                              UNetCache<T>* cache = nullptr);

/// Gradient of sum(upstream * model_forward) for every parameter group. Groups a model kind does
/// not use come back zero.
template <typename T>
ModelParams<T> model_backward(ModelKind kind, const ModelParams<T>& p, const ModelInputs<T>& in,
                              const BasicTensor3<T>& upstream, const UNetCache<T>* cache = nullptr);

}  // namespace pgrecon

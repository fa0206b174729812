#include "pgrecon/optim.hpp"

#include <cmath>

namespace pgrecon {

namespace {

template <typename T>
std::size_t checked_count(const BasicTensor3<T>& pred, const BasicTensor3<T>& obs, const Mask3& mask) {
    if (!pred.same_shape(obs) || !mask.same_shape(pred)) {
        throw PreconditionError("masked_l1: prediction, observation and mask dims disagree");
    }
    const std::size_t n = mask.popcount();
    if (n == 0) throw PreconditionError("masked_l1: mask has no observed entries, loss is undefined");
    return n;
}

}  // namespace

template <typename T>
LossAndGrad<T> masked_l1(const BasicTensor3<T>& pred, const BasicTensor3<T>& obs, const Mask3& mask) {
    const std::size_t n = checked_count(pred, obs, mask);
    LossAndGrad<T> out{0.0, BasicTensor3<T>(pred.height(), pred.width(), pred.channels())};
    const T step = static_cast<T>(1.0 / static_cast<double>(n));
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!mask[k]) continue;
        const double d = static_cast<double>(pred[k]) - static_cast<double>(obs[k]);
        sum += std::abs(d);
        out.grad[k] = d > 0.0 ? step : (d < 0.0 ? -step : T(0));
    }
    out.loss = sum / static_cast<double>(n);
    return out;
}

template <typename T>
double masked_l1_loss(const BasicTensor3<T>& pred, const BasicTensor3<T>& obs, const Mask3& mask) {
    const std::size_t n = checked_count(pred, obs, mask);
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (mask[k]) sum += std::abs(static_cast<double>(pred[k]) - static_cast<double>(obs[k]));
    }
    return sum / static_cast<double>(n);
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state, double lr, const AdamConfig& cfg,
               int step, std::string_view group) {
    if (params.size() != grads.size()) throw PreconditionError("adam_step: parameter/gradient size mismatch");
    if (step < 1) throw PreconditionError("adam_step: step index must be >= 1");
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!std::isfinite(static_cast<double>(grads[k]))) {
            throw NumericError("non-finite gradient in parameter group '" + std::string(group) + "' at index " +
                               std::to_string(k));
        }
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[k] / bc1;
        const double vhat = state.v[k] / bc2;
        params[k] = static_cast<T>(params[k] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

template LossAndGrad<float> masked_l1(const BasicTensor3<float>&, const BasicTensor3<float>&, const Mask3&);
template LossAndGrad<double> masked_l1(const BasicTensor3<double>&, const BasicTensor3<double>&, const Mask3&);
template double masked_l1_loss(const BasicTensor3<float>&, const BasicTensor3<float>&, const Mask3&);
template double masked_l1_loss(const BasicTensor3<double>&, const BasicTensor3<double>&, const Mask3&);
template void adam_step(std::span<float>, std::span<const float>, AdamMoments&, double, const AdamConfig&, int,
                        std::string_view);
template void adam_step(std::span<double>, std::span<const double>, AdamMoments&, double, const AdamConfig&, int,
                        std::string_view);

}  // namespace pgrecon

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pgrecon/tensor.hpp"

namespace pgrecon {

/// Non-finite loss or gradient during optimization.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
struct LossAndGrad {
    double loss = 0.0;
    BasicTensor3<T> grad;
};

/// Mean absolute error over entries with mask = 1, and its subgradient sign(pred - obs) / N
/// (sign(0) = 0). Entries with mask = 0 are never read.
template <typename T>
LossAndGrad<T> masked_l1(const BasicTensor3<T>& pred, const BasicTensor3<T>& obs, const Mask3& mask);

/// Loss only.
template <typename T>
double masked_l1_loss(const BasicTensor3<T>& pred, const BasicTensor3<T>& obs, const Mask3& mask);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments for one parameter buffer.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update; `step` counts from 1. Throws NumericError naming `group`
/// if any gradient entry is non-finite (parameters are left untouched in that case).
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state, double lr, const AdamConfig& cfg,
               int step, std::string_view group);

}  // namespace pgrecon

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pgrecon/model.hpp"
#include "pgrecon/optim.hpp"

namespace pgrecon {

/// Adam parameter groups.
enum class ParamGroup : int { a = 0, b, phase, w, conv };
inline constexpr int kGroupCount = 5;
const char* group_name(ParamGroup g);
ParamGroup parse_group(const std::string& s);

struct TrainConfig {
    double lr = 0.1;
    int epochs = 500;
    AdamConfig adam;
    std::uint64_t seed = 0;
    double holdout = 0.2;
    std::array<std::optional<double>, kGroupCount> lr_override;
    bool center_driver = false;
    int base_width = 16;

    double group_lr(ParamGroup g) const { return lr_override[static_cast<int>(g)].value_or(lr); }
    void validate() const;
};

struct LossHistory {
    double initial_train = 0.0;         // loss of the initialized model, before any update
    std::optional<double> initial_test;
    std::vector<double> train;          // train[e] = loss after e + 1 updates
    std::vector<double> test;           // empty when no held-out mask was given
};

struct FitResult {
    ModelState model;
    LossHistory history;
};

/// Everything a fit reads from a scene.
struct FitData {
    const Tensor3& obs;
    const TimeAxis& times;
    const Tensor3& tc_fine;   // fine-grid driver in kelvin, may be empty for kinds without it
    const Tensor3& features;  // static features, may be empty for kinds without the residual net
};

/// Initialized model: harmonic warm start, zero amplifier weights, seeded net with zero head
/// (random head for the naive kind).
ModelState init_model(ModelKind kind, const FitData& data, const Mask3& train, const TrainConfig& cfg);

/// Full-batch joint training of the kind's components under the masked L1 loss.
FitResult fit_model(ModelKind kind, const FitData& data, const Mask3& train, const TrainConfig& cfg,
                    const Mask3* test = nullptr);

/// Proposed three-component model.
FitResult fit(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const Tensor3& tc_fine,
              const Tensor3& features, const TrainConfig& cfg, const Mask3* test = nullptr);

/// Gapless sum of the model's component forwards.
Tensor3 reconstruct(const ModelState& model, const TimeAxis& times, const Tensor3& tc_fine, const Tensor3& features);

}  // namespace pgrecon

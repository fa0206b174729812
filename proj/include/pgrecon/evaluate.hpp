#pragma once

#include <string>
#include <vector>

#include "pgrecon/trainer.hpp"

namespace pgrecon {

struct EvalReport {
    double mae = 0.0;   // kelvin
    double rmse = 0.0;  // kelvin
    double bias = 0.0;  // kelvin, mean of pred - obs
    std::size_t n = 0;
    std::string label;  // train | test | insitu
};

/// Metrics of d = pred - obs over entries with mask = 1. Entries outside the mask are never read.
EvalReport evaluate(const Tensor3& pred, const Tensor3& obs, const Mask3& mask, const std::string& label);

/// Annual cycle only: amplifier frozen at 0 and no residual net.
FitResult fit_atc_only(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const TrainConfig& cfg,
                       const Mask3* test = nullptr);

/// Annual cycle and amplified driver trained jointly; no residual net.
FitResult fit_atc_era5(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const Tensor3& tc_fine,
                       const TrainConfig& cfg, const Mask3* test = nullptr);

/// Features mapped straight to every time step by the same backbone with a randomly initialized
/// head and no physics terms. The output does not depend on the driver.
FitResult fit_naive_cnn(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const Tensor3& features,
                        const TrainConfig& cfg, const Mask3* test = nullptr);

/// One method's train/test metrics, as laid out in the comparison table.
struct MethodRow {
    std::string method;
    EvalReport train;
    EvalReport test;
};

/// CSV with header method,train_mae,train_rmse,train_bias,train_n,test_mae,test_rmse,test_bias,test_n.
std::string format_table(const std::vector<MethodRow>& rows);

/// One "label mae=... rmse=... bias=... n=..." line per report.
std::string format_reports(const std::vector<EvalReport>& reports);

}  // namespace pgrecon

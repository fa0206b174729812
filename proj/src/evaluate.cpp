#include "pgrecon/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pgrecon {

EvalReport evaluate(const Tensor3& pred, const Tensor3& obs, const Mask3& mask, const std::string& label) {
    if (!pred.same_shape(obs) || !mask.same_shape(pred)) {
        throw PreconditionError("evaluate: prediction, observation and mask dims disagree");
    }
    double sum_abs = 0.0;
    double sum_sq = 0.0;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        if (!mask[k]) continue;
        const double d = static_cast<double>(pred[k]) - static_cast<double>(obs[k]);
        sum_abs += std::abs(d);
        sum_sq += d * d;
        sum += d;
        ++n;
    }
    if (n == 0) throw PreconditionError("evaluate: mask '" + label + "' selects no entries");
    EvalReport r;
    r.n = n;
    r.label = label;
    r.mae = sum_abs / static_cast<double>(n);
    r.rmse = std::sqrt(sum_sq / static_cast<double>(n));
    r.bias = sum / static_cast<double>(n);
    // Rounding can break rmse >= mae >= |bias| by an ulp when all |d| are equal.
    r.mae = std::max(r.mae, std::abs(r.bias));
    r.rmse = std::max(r.rmse, r.mae);
    return r;
}

FitResult fit_atc_only(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const TrainConfig& cfg,
                       const Mask3* test) {
    const Tensor3 none;
    return fit_model(ModelKind::atc, FitData{obs, times, none, none}, train, cfg, test);
}

FitResult fit_atc_era5(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const Tensor3& tc_fine,
                       const TrainConfig& cfg, const Mask3* test) {
    const Tensor3 none;
    return fit_model(ModelKind::atc_era5, FitData{obs, times, tc_fine, none}, train, cfg, test);
}

FitResult fit_naive_cnn(const Tensor3& obs, const Mask3& train, const TimeAxis& times, const Tensor3& features,
                        const TrainConfig& cfg, const Mask3* test) {
    const Tensor3 none;
    return fit_model(ModelKind::naive, FitData{obs, times, none, features}, train, cfg, test);
}

std::string format_table(const std::vector<MethodRow>& rows) {
    std::string out = "method,train_mae,train_rmse,train_bias,train_n,test_mae,test_rmse,test_bias,test_n\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%zu,%.6f,%.6f,%.6f,%zu\n", r.method.c_str(), r.train.mae,
                      r.train.rmse, r.train.bias, r.train.n, r.test.mae, r.test.rmse, r.test.bias, r.test.n);
        out += buf;
    }
    return out;
}

std::string format_reports(const std::vector<EvalReport>& reports) {
    std::string out;
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%s mae=%.6f rmse=%.6f bias=%.6f n=%zu\n", r.label.c_str(), r.mae, r.rmse,
                      r.bias, r.n);
        out += buf;
    }
    return out;
}

}  // namespace pgrecon

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgrecon/model.hpp"
#include "pgrecon/optim.hpp"

namespace pgrecon {

struct GradcheckOptions {
    int height = 8;
    int width = 8;
    int channels = 6;
    int feature_channels = 3;
    int base_width = 2;
    std::uint64_t seed = 1;
    double tolerance = 1e-3;
    /// Test hook: negate the analytic gradient of the amplifier weights before comparing.
    bool flip_amp_sign = false;
};

struct GroupCheck {
    std::string group;
    double worst_rel_err = 0.0;
    std::size_t checked = 0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GroupCheck> groups;  // a, b, phase, w, conv
    bool pass = false;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double relative_error(double analytic, double numeric);

/// Builds a small self-generated scene on the f64 path and compares the assembled gradient of the
/// masked L1 loss against central finite differences for every parameter group. When a
/// perturbation crosses a kink of the loss or of a ReLU/max-pool, the step is shrunk and retried.
GradcheckReport run_gradcheck(const GradcheckOptions& opts = {});

}  // namespace pgrecon

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "pgrecon/trainer.hpp"

namespace pgrecon {

/// Invalid or incomplete configuration; `field()` names the offending key when known.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, std::string field = {})
        : std::runtime_error(what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct SynthConfig {
    int height = 32;
    int width = 32;
    int channels = 365;
    int feature_channels = 7;
    int coarse_height = 8;
    int coarse_width = 8;
    double period = 365.0;
    double correlation_length = 6.0;  // pixels
    double anomaly_variance = 9.0;    // K^2
    double residual_amplitude = 1.0;  // K
    double noise_sigma = 0.5;         // K
    double p_day = 0.3;
    double p_pix = 0.7;
    int probe_i = -1;  // -1 selects the centre pixel
    int probe_j = -1;
    std::uint64_t seed = 0;

    void validate() const;
    int probe_row() const { return probe_i < 0 ? height / 2 : probe_i; }
    int probe_col() const { return probe_j < 0 ? width / 2 : probe_j; }
};

/// JSON object; the six dimension keys are required, everything else defaults.
SynthConfig parse_synth_config(const std::string& json_text);
std::string synth_config_json(const SynthConfig& cfg);

inline constexpr double kDriverOffset = 280.0;
inline constexpr double kDriverAr1 = 0.8;

struct SynthScene {
    SynthConfig cfg;
    TimeAxis times;
    Tensor3 obs;        // truth + noise, NaN where cloudy
    Tensor3 truth;      // gapless
    Tensor3 tc_coarse;  // driver on the coarse grid
    Tensor3 tc_fine;    // resample_bilinear(tc_coarse)
    Tensor3 features;
    AtcParams<float> atc;
    AmpWeights<float> amp;
    Tensor3 residual;

    Mask3 mask() const { return mask_from_nan(obs); }
    /// Gapless truth at the probe pixel as a 1 x 1 x C stack.
    Tensor3 probe_truth() const;
};

/// Seeded scene: truth = atc_forward(atc) + amplify_forward(amp, tc_fine) + residual, summed in
/// that order in f32.
SynthScene gen_scene(const SynthConfig& cfg);

/// Writes TSK1 files for every role plus manifest.json (roles, config echo, SHA-256 per file).
void save_scene(const std::filesystem::path& dir, const SynthScene& scene);
SynthScene load_scene(const std::filesystem::path& dir);

struct RecoveryReport {
    double gapless_mae = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Compares the model's reconstruction with the scene truth over every entry.
RecoveryReport recovery_check(const SynthScene& scene, const ModelState& fitted, double tol);

}  // namespace pgrecon

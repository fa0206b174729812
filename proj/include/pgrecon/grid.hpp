#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include "pgrecon/tensor.hpp"

namespace pgrecon {

/// Center-aligned bilinear upsampling of every channel to height x width.
/// Fine column x maps to coarse coordinate (x + 0.5) * Wc / W - 0.5, clamped to [0, Wc - 1];
/// rows likewise. Rejects NaN input.
Tensor3 resample_bilinear(const Tensor3& coarse, int height, int width);

struct Split {
    Mask3 train;
    Mask3 test;
};

/// Moves round(fraction * N_obs) observed entries into the test mask, chosen by a seeded
/// uniform shuffle of observed entry indices. Same (mask, fraction, seed) gives the same split.
Split holdout_split(const Mask3& observed, double fraction, std::uint64_t seed);

/// Worker count used by the pixel- and channel-parallel loops. Results never depend on it.
void set_num_threads(int n);
int num_threads();

/// Runs fn(k) for k in [begin, end) over statically chunked workers.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace pgrecon

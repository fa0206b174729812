#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pgrecon/model.hpp"
#include "pgrecon/tsk_io.hpp"

namespace pgrecon {

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// "PGM1" checkpoint layout (little-endian):
///   magic "PGM1", u8 version, u8 model kind, u8 flags (bit 0: driver centering), u8 reserved,
///   u32 in_channels, out_channels, base_width, depth,
///   f64 period, u32 C, C x f64 time_days,
///   u32 record count, then records: u16 name length, name bytes, u8 record type and body.
///   Type 0 body: u32 length + an embedded TSK1 tensor (parameter planes).
///   Type 1 body: u8 rank, rank x u32 dims, f32 payload (kernels, biases, normalization stats).
std::vector<std::uint8_t> encode_checkpoint(const ModelState& model);
ModelState decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Atomic write (temp file + rename).
void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace pgrecon

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pgrecon/tensor.hpp"

namespace pgrecon {

/// Malformed or unreadable input file. `offset()` is the byte position of the problem.
class LoadError : public std::runtime_error {
public:
    LoadError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

inline constexpr std::size_t kTskHeaderSize = 32;

/// TSK1 layout: "TSK1", u32 H, u32 W, u32 C (little-endian), u8 dtype (0x01 = f32),
/// u8 unit, 14 reserved zero bytes, then H*W*C little-endian f32 channel-major.
std::vector<std::uint8_t> encode_tsk(const Tensor3& t);
Tensor3 decode_tsk(const std::uint8_t* bytes, std::size_t size, std::uint64_t base_offset = 0);

void write_tsk(const std::filesystem::path& path, const Tensor3& t);
Tensor3 read_tsk(const std::filesystem::path& path);

std::filesystem::path meta_path(const std::filesystem::path& tsk_path);
void write_meta(const std::filesystem::path& tsk_path, const TimeAxis& axis);
TimeAxis read_meta(const std::filesystem::path& tsk_path);

/// Tensor plus its `<name>.meta` sidecar. The sidecar's time list must match C.
std::pair<Tensor3, TimeAxis> load_stack(const std::filesystem::path& path);
void save_stack(const std::filesystem::path& path, const Tensor3& t, const TimeAxis& axis);

/// Writes through a temp file in the same directory followed by rename.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

namespace le {
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint16_t get_u16(const std::uint8_t* p);
std::uint32_t get_u32(const std::uint8_t* p);
float get_f32(const std::uint8_t* p);
double get_f64(const std::uint8_t* p);
}  // namespace le

}  // namespace pgrecon

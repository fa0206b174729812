#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pgrecon {

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace pgrecon

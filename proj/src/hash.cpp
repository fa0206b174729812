#include "pgrecon/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <stdexcept>

#include "pgrecon/tsk_io.hpp"

namespace pgrecon {

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    std::string hex;
    char buf[3];
    for (unsigned int k = 0; k < len; ++k) {
        std::snprintf(buf, sizeof buf, "%02x", md[k]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace pgrecon

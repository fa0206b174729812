#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "pgrecon/tensor.hpp"

namespace testing {

// Self-removing scratch directory.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pgrecon_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::uint32_t bits_of(float v) {
    std::uint32_t b;
    std::memcpy(&b, &v, 4);
    return b;
}

inline bool bitwise_equal(const pgrecon::Tensor3& a, const pgrecon::Tensor3& b) {
    return a.same_shape(b) && a.unit() == b.unit() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

inline pgrecon::Tensor3 random_tensor(std::mt19937_64& rng, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    pgrecon::Tensor3 t(h, w, c);
    for (auto& v : t.values()) v = static_cast<float>(u(rng));
    return t;
}

}  // namespace testing

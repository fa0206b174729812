#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgrecon {

enum class Unit : std::uint8_t { dimensionless = 0, kelvin = 1, reflectance = 2 };

const char* unit_name(Unit u);

/// Error raised when inputs violate an operation's precondition.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense H x W x C grid stored channel-major: index = c*H*W + i*W + j.
/// Each channel is one contiguous spatial plane.
template <typename T>
class BasicTensor3 {
public:
    BasicTensor3() = default;
    BasicTensor3(int height, int width, int channels, T fill = T(0), Unit unit = Unit::dimensionless)
        : h_(height), w_(width), c_(channels), unit_(unit) {
        if (height < 1 || width < 1 || channels < 1) {
            throw PreconditionError("tensor dims must be >= 1, got " + std::to_string(height) + "x" +
                                    std::to_string(width) + "x" + std::to_string(channels));
        }
        data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    Unit unit() const { return unit_; }
    void set_unit(Unit u) { unit_ = u; }

    std::size_t index(int i, int j, int c) const {
        return static_cast<std::size_t>(c) * plane_size() + static_cast<std::size_t>(i) * w_ + j;
    }
    T& operator()(int i, int j, int c) { return data_[index(i, j, c)]; }
    const T& operator()(int i, int j, int c) const { return data_[index(i, j, c)]; }
    T& operator[](std::size_t k) { return data_[k]; }
    const T& operator[](std::size_t k) const { return data_[k]; }

    std::span<T> plane(int c) { return {data_.data() + static_cast<std::size_t>(c) * plane_size(), plane_size()}; }
    std::span<const T> plane(int c) const {
        return {data_.data() + static_cast<std::size_t>(c) * plane_size(), plane_size()};
    }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    bool same_shape(int h, int w, int c) const { return h_ == h && w_ == w && c_ == c; }
    template <typename U>
    bool same_shape(const BasicTensor3<U>& o) const {
        return same_shape(o.height(), o.width(), o.channels());
    }

    template <typename U>
    BasicTensor3<U> cast() const {
        BasicTensor3<U> out(h_, w_, c_, U(0), unit_);
        for (std::size_t k = 0; k < data_.size(); ++k) out[k] = static_cast<U>(data_[k]);
        return out;
    }

    friend bool operator==(const BasicTensor3&, const BasicTensor3&) = default;

private:
    int h_ = 0;
    int w_ = 0;
    int c_ = 0;
    Unit unit_ = Unit::dimensionless;
    std::vector<T> data_;
};

using Tensor3 = BasicTensor3<float>;
using Tensor3d = BasicTensor3<double>;

/// Observed/missing indicator with the same layout as its paired tensor (1 = observed).
class Mask3 {
public:
    Mask3() = default;
    Mask3(int height, int width, int channels, bool fill = false);

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t size() const { return bits_.size(); }

    bool operator[](std::size_t k) const { return bits_[k] != 0; }
    void set(std::size_t k, bool v) { bits_[k] = v ? 1 : 0; }
    bool at(int i, int j, int c) const {
        return bits_[static_cast<std::size_t>(c) * h_ * w_ + static_cast<std::size_t>(i) * w_ + j] != 0;
    }

    std::size_t popcount() const;
    const std::vector<std::uint8_t>& bytes() const { return bits_; }

    bool same_shape(int h, int w, int c) const { return h_ == h && w_ == w && c_ == c; }
    template <typename T>
    bool same_shape(const BasicTensor3<T>& t) const {
        return same_shape(t.height(), t.width(), t.channels());
    }

    friend bool operator==(const Mask3&, const Mask3&) = default;

private:
    int h_ = 0;
    int w_ = 0;
    int c_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Per-channel time coordinates in fractional days.
struct TimeAxis {
    std::vector<double> days;
    double period = 365.0;

    int size() const { return static_cast<int>(days.size()); }
    void validate() const;
    /// Daily axis 0, 1, ..., n-1.
    static TimeAxis daily(int n, double period = 365.0);

    friend bool operator==(const TimeAxis&, const TimeAxis&) = default;
};

Mask3 mask_from_nan(const Tensor3& x);

template <typename T>
void require_same_shape(const BasicTensor3<T>& a, int h, int w, int c, const char* what) {
    if (!a.same_shape(h, w, c)) {
        throw PreconditionError(std::string(what) + ": expected " + std::to_string(h) + "x" + std::to_string(w) +
                                "x" + std::to_string(c) + ", got " + std::to_string(a.height()) + "x" +
                                std::to_string(a.width()) + "x" + std::to_string(a.channels()));
    }
}

}  // namespace pgrecon

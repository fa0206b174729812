#include "pgrecon/tsk_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

namespace pgrecon {

namespace fs = std::filesystem;

namespace le {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>((bits >> s) & 0xFF));
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

double get_f64(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | p[k];
    return std::bit_cast<double>(bits);
}

}  // namespace le

namespace {

constexpr char kMagic[4] = {'T', 'S', 'K', '1'};
constexpr std::uint8_t kDtypeF32 = 0x01;

}  // namespace

std::vector<std::uint8_t> encode_tsk(const Tensor3& t) {
    std::vector<std::uint8_t> out;
    out.reserve(kTskHeaderSize + 4 * t.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    le::put_u32(out, static_cast<std::uint32_t>(t.height()));
    le::put_u32(out, static_cast<std::uint32_t>(t.width()));
    le::put_u32(out, static_cast<std::uint32_t>(t.channels()));
    out.push_back(kDtypeF32);
    out.push_back(static_cast<std::uint8_t>(t.unit()));
    out.resize(kTskHeaderSize, 0);
    for (float v : t.values()) le::put_f32(out, v);
    return out;
}

Tensor3 decode_tsk(const std::uint8_t* bytes, std::size_t size, std::uint64_t base_offset) {
    if (size < kTskHeaderSize) throw LoadError("truncated TSK1 header", base_offset + size);
    if (std::memcmp(bytes, kMagic, 4) != 0) throw LoadError("bad magic, expected TSK1", base_offset);
    const std::uint32_t h = le::get_u32(bytes + 4);
    const std::uint32_t w = le::get_u32(bytes + 8);
    const std::uint32_t c = le::get_u32(bytes + 12);
    if (h == 0 || w == 0 || c == 0) throw LoadError("zero dimension in TSK1 header", base_offset + 4);
    constexpr std::uint64_t kMaxDim = static_cast<std::uint64_t>(std::numeric_limits<int>::max());
    if (h > kMaxDim || w > kMaxDim || c > kMaxDim) throw LoadError("dimension overflow", base_offset + 4);
    const std::uint64_t count = static_cast<std::uint64_t>(h) * w * c;
    if (count / c / w != h || count > (std::numeric_limits<std::uint64_t>::max() - kTskHeaderSize) / 4) {
        throw LoadError("dimension overflow", base_offset + 4);
    }
    if (bytes[16] != kDtypeF32) throw LoadError("unsupported dtype code", base_offset + 16);
    if (bytes[17] > 2) throw LoadError("unknown unit code", base_offset + 17);
    for (std::size_t k = 18; k < kTskHeaderSize; ++k) {
        if (bytes[k] != 0) throw LoadError("reserved header byte is nonzero", base_offset + k);
    }
    const std::uint64_t payload = count * 4;
    if (size - kTskHeaderSize < payload) {
        throw LoadError("truncated payload: need " + std::to_string(payload) + " bytes",
                        base_offset + size);
    }
    if (size - kTskHeaderSize > payload) {
        throw LoadError("trailing bytes after payload", base_offset + kTskHeaderSize + payload);
    }

    Tensor3 t(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), 0.0f,
              static_cast<Unit>(bytes[17]));
    const std::uint8_t* p = bytes + kTskHeaderSize;
    for (std::uint64_t k = 0; k < count; ++k, p += 4) {
        const float v = le::get_f32(p);
        if (std::isinf(v)) throw LoadError("non-finite non-NaN value", base_offset + kTskHeaderSize + 4 * k);
        t[static_cast<std::size_t>(k)] = v;
    }
    return t;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string(), 0);
    in.seekg(0, std::ios::end);
    const auto n = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(n);
    if (n > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (!in) throw LoadError("read failure on " + path.string(), 0);
    return bytes;
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::random_device rd;
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(rd());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failure on " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_tsk(const fs::path& path, const Tensor3& t) { write_file_atomic(path, encode_tsk(t)); }

Tensor3 read_tsk(const fs::path& path) {
    const auto bytes = read_file(path);
    return decode_tsk(bytes.data(), bytes.size());
}

fs::path meta_path(const fs::path& tsk_path) {
    fs::path p = tsk_path;
    p.replace_extension(".meta");
    return p;
}

void write_meta(const fs::path& tsk_path, const TimeAxis& axis) {
    nlohmann::ordered_json j;
    j["period_days"] = axis.period;
    j["time_days"] = axis.days;
    const std::string text = j.dump(2) + "\n";
    write_file_atomic(meta_path(tsk_path), std::vector<std::uint8_t>(text.begin(), text.end()));
}

TimeAxis read_meta(const fs::path& tsk_path) {
    const auto p = meta_path(tsk_path);
    const auto bytes = read_file(p);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(p.string() + ": " + e.what(), e.byte);
    }
    TimeAxis axis;
    try {
        axis.period = j.at("period_days").get<double>();
        axis.days = j.at("time_days").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(p.string() + ": " + e.what(), 0);
    }
    try {
        axis.validate();
    } catch (const PreconditionError& e) {
        throw LoadError(p.string() + ": " + e.what(), 0);
    }
    return axis;
}

std::pair<Tensor3, TimeAxis> load_stack(const fs::path& path) {
    Tensor3 t = read_tsk(path);
    TimeAxis axis = read_meta(path);
    if (axis.size() != t.channels()) {
        throw LoadError(meta_path(path).string() + ": time_days has " + std::to_string(axis.size()) +
                            " entries but tensor has " + std::to_string(t.channels()) + " channels",
                        12);
    }
    return {std::move(t), std::move(axis)};
}

void save_stack(const fs::path& path, const Tensor3& t, const TimeAxis& axis) {
    if (axis.size() != t.channels()) throw PreconditionError("time axis length must equal channel count");
    write_tsk(path, t);
    write_meta(path, axis);
}

}  // namespace pgrecon

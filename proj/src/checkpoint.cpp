#include "pgrecon/checkpoint.hpp"

#include <cstring>
#include <map>
#include <string>

namespace pgrecon {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'M', '1'};

struct RawArray {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

void put_name(std::vector<std::uint8_t>& out, const std::string& name) {
    le::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
}

void put_plane(std::vector<std::uint8_t>& out, const std::string& name, const Tensor3& t) {
    put_name(out, name);
    out.push_back(0);
    const auto blob = encode_tsk(t);
    le::put_u32(out, static_cast<std::uint32_t>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
}

void put_array(std::vector<std::uint8_t>& out, const std::string& name, const std::vector<std::uint32_t>& dims,
               const std::vector<float>& values) {
    put_name(out, name);
    out.push_back(1);
    out.push_back(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) le::put_u32(out, d);
    for (float v : values) le::put_f32(out, v);
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

    const std::uint8_t* take(std::size_t n, const char* what) {
        if (b_.size() - pos_ < n) throw LoadError(std::string("truncated checkpoint while reading ") + what, b_.size());
        const std::uint8_t* p = b_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8(const char* what) { return *take(1, what); }
    std::uint16_t u16(const char* what) { return le::get_u16(take(2, what)); }
    std::uint32_t u32(const char* what) { return le::get_u32(take(4, what)); }
    double f64(const char* what) { return le::get_f64(take(8, what)); }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

std::string layer_key(int l, const char* part) { return std::string("unet.") + layer_name(l) + "." + part; }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelState& m) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.push_back(kCheckpointVersion);
    out.push_back(static_cast<std::uint8_t>(m.kind));
    out.push_back(m.center_driver ? 1 : 0);
    out.push_back(0);
    le::put_u32(out, static_cast<std::uint32_t>(m.unet_cfg.in_channels));
    le::put_u32(out, static_cast<std::uint32_t>(m.unet_cfg.out_channels));
    le::put_u32(out, static_cast<std::uint32_t>(m.unet_cfg.base_width));
    le::put_u32(out, static_cast<std::uint32_t>(m.unet_cfg.depth));
    le::put_f64(out, m.times.period);
    le::put_u32(out, static_cast<std::uint32_t>(m.times.size()));
    for (double d : m.times.days) le::put_f64(out, d);

    std::uint32_t count = 4 + 2 * kLayerCount + 2 + (m.center_driver ? 1 : 0);
    le::put_u32(out, count);
    put_plane(out, "atc.a", m.params.atc.a);
    put_plane(out, "atc.b", m.params.atc.b);
    put_plane(out, "atc.phase", m.params.atc.phase);
    put_plane(out, "amp.w", m.params.amp.w);
    if (m.center_driver) put_plane(out, "amp.driver_mean", m.driver_mean);
    const auto cx = static_cast<std::uint32_t>(m.norm.mean.size());
    put_array(out, "norm.mean", {cx}, m.norm.mean);
    put_array(out, "norm.scale", {cx}, m.norm.scale);
    for (int l = 0; l < kLayerCount; ++l) {
        const auto& layer = m.params.unet.layers[static_cast<std::size_t>(l)];
        put_array(out, layer_key(l, "weight"),
                  {static_cast<std::uint32_t>(layer.out), static_cast<std::uint32_t>(layer.in),
                   static_cast<std::uint32_t>(layer.k), static_cast<std::uint32_t>(layer.k)},
                  layer.weight);
        put_array(out, layer_key(l, "bias"), {static_cast<std::uint32_t>(layer.out)}, layer.bias);
    }
    return out;
}

ModelState decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) throw LoadError("bad magic, expected PGM1", 0);
    const std::uint8_t version = r.u8("version");
    if (version != kCheckpointVersion) {
        throw LoadError("unsupported checkpoint version " + std::to_string(version), 4);
    }
    ModelState m;
    const std::uint8_t kind = r.u8("model kind");
    if (kind > 3) throw LoadError("unknown model kind code", 5);
    m.kind = static_cast<ModelKind>(kind);
    const std::uint8_t flags = r.u8("flags");
    if (flags > 1) throw LoadError("unknown flag bits", 6);
    m.center_driver = (flags & 1) != 0;
    r.u8("reserved");
    m.unet_cfg.in_channels = static_cast<int>(r.u32("unet config"));
    m.unet_cfg.out_channels = static_cast<int>(r.u32("unet config"));
    m.unet_cfg.base_width = static_cast<int>(r.u32("unet config"));
    m.unet_cfg.depth = static_cast<int>(r.u32("unet config"));
    try {
        m.unet_cfg.validate();
    } catch (const PreconditionError& e) {
        throw LoadError(std::string("invalid unet config: ") + e.what(), 8);
    }
    m.times.period = r.f64("time axis");
    const std::uint32_t c = r.u32("time axis");
    if (c == 0 || static_cast<std::uint64_t>(c) * 8 > bytes.size()) throw LoadError("bad time axis length", r.pos() - 4);
    for (std::uint32_t k = 0; k < c; ++k) m.times.days.push_back(r.f64("time axis"));

    std::map<std::string, Tensor3> planes;
    std::map<std::string, RawArray> arrays;
    const std::uint32_t count = r.u32("record count");
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint16_t len = r.u16("record name");
        const auto* np = r.take(len, "record name");
        std::string name(reinterpret_cast<const char*>(np), len);
        const std::size_t at = r.pos();
        const std::uint8_t type = r.u8("record type");
        if (type == 0) {
            const std::uint32_t n = r.u32("plane length");
            const std::size_t start = r.pos();
            const auto* p = r.take(n, "plane payload");
            planes[name] = decode_tsk(p, n, start);
        } else if (type == 1) {
            RawArray a;
            const std::uint8_t rank = r.u8("array rank");
            std::uint64_t total = 1;
            for (int d = 0; d < rank; ++d) {
                a.dims.push_back(r.u32("array dims"));
                total *= a.dims.back();
                if (total > bytes.size()) throw LoadError("array record " + name + " larger than file", r.pos());
            }
            const auto* p = r.take(static_cast<std::size_t>(total) * 4, "array payload");
            a.values.resize(static_cast<std::size_t>(total));
            for (std::size_t q = 0; q < a.values.size(); ++q) a.values[q] = le::get_f32(p + 4 * q);
            arrays[name] = std::move(a);
        } else {
            throw LoadError("unknown record type for " + name, at);
        }
    }
    if (!r.done()) throw LoadError("trailing bytes after last record", r.pos());

    auto plane = [&](const std::string& name) -> Tensor3 {
        auto it = planes.find(name);
        if (it == planes.end()) throw LoadError("missing record " + name, bytes.size());
        return it->second;
    };
    auto array = [&](const std::string& name, const std::vector<std::uint32_t>& dims) -> std::vector<float> {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw LoadError("missing record " + name, bytes.size());
        if (it->second.dims != dims) throw LoadError("shape mismatch in record " + name, bytes.size());
        return it->second.values;
    };

    m.params.atc.a = plane("atc.a");
    m.params.atc.b = plane("atc.b");
    m.params.atc.phase = plane("atc.phase");
    m.params.amp.w = plane("amp.w");
    const int h = m.params.atc.a.height();
    const int w = m.params.atc.a.width();
    for (const Tensor3* t : {&m.params.atc.b, &m.params.atc.phase, &m.params.amp.w}) {
        if (!t->same_shape(h, w, 1)) throw LoadError("parameter plane dims disagree", bytes.size());
    }
    if (m.center_driver) {
        m.driver_mean = plane("amp.driver_mean");
        if (!m.driver_mean.same_shape(h, w, 1)) throw LoadError("driver mean dims disagree", bytes.size());
    }
    auto norm_it = arrays.find("norm.mean");
    const std::uint32_t cx = norm_it == arrays.end() || norm_it->second.dims.empty() ? 0 : norm_it->second.dims[0];
    m.norm.mean = array("norm.mean", {cx});
    m.norm.scale = array("norm.scale", {cx});
    m.params.unet = UNetWeights<float>::zeros(m.unet_cfg);
    for (int l = 0; l < kLayerCount; ++l) {
        auto& layer = m.params.unet.layers[static_cast<std::size_t>(l)];
        layer.weight = array(layer_key(l, "weight"),
                             {static_cast<std::uint32_t>(layer.out), static_cast<std::uint32_t>(layer.in),
                              static_cast<std::uint32_t>(layer.k), static_cast<std::uint32_t>(layer.k)});
        layer.bias = array(layer_key(l, "bias"), {static_cast<std::uint32_t>(layer.out)});
    }
    if (static_cast<int>(c) != m.unet_cfg.out_channels) {
        throw LoadError("time axis length disagrees with unet output channels", bytes.size());
    }
    return m;
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(model));
}

ModelState load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace pgrecon

#include "tomo/ntc.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace tomo {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'C', '1'};

size_t dtype_size(uint8_t dt) {
    switch (dt) {
        case 0: return 4;
        case 1: return 8;
        case 2: return 1;
        case 3: return 8;
    }
    throw ValidationError("ntc: unknown dtype " + std::to_string(dt));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;
    std::string origin;

    void need(size_t n, const std::string& what) {
        if (pos + n > b.size())
            throw ValidationError("ntc: " + origin + ": truncated " + what +
                                  " at offset " + std::to_string(pos) + " (need " +
                                  std::to_string(n) + " bytes, " +
                                  std::to_string(b.size() - pos) + " left)");
    }
    uint16_t u16() {
        need(2, "u16");
        uint16_t v = static_cast<uint16_t>(b[pos] | (b[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4, "u32");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8, "u64");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    uint8_t u8() {
        need(1, "u8");
        return b[pos++];
    }
};

}  // namespace

NtcTensor NtcTensor::from_f32(const Tensor& t) {
    NtcTensor n;
    n.dtype = 0;
    n.dims = t.dims;
    n.raw.resize(t.data.size() * 4);
    std::memcpy(n.raw.data(), t.data.data(), n.raw.size());
    return n;
}
NtcTensor NtcTensor::from_i64(const std::vector<int64_t>& v,
                              std::vector<int64_t> dims) {
    if (Tensor::numel_of(dims) != static_cast<int64_t>(v.size()))
        throw ValidationError("ntc: i64 dims/data mismatch");
    NtcTensor n;
    n.dtype = 3;
    n.dims = std::move(dims);
    n.raw.resize(v.size() * 8);
    std::memcpy(n.raw.data(), v.data(), n.raw.size());
    return n;
}
NtcTensor NtcTensor::from_u8(const std::vector<uint8_t>& v,
                             std::vector<int64_t> dims) {
    if (Tensor::numel_of(dims) != static_cast<int64_t>(v.size()))
        throw ValidationError("ntc: u8 dims/data mismatch");
    NtcTensor n;
    n.dtype = 2;
    n.dims = std::move(dims);
    n.raw = v;
    return n;
}
NtcTensor NtcTensor::from_f64(const std::vector<double>& v,
                              std::vector<int64_t> dims) {
    if (Tensor::numel_of(dims) != static_cast<int64_t>(v.size()))
        throw ValidationError("ntc: f64 dims/data mismatch");
    NtcTensor n;
    n.dtype = 1;
    n.dims = std::move(dims);
    n.raw.resize(v.size() * 8);
    std::memcpy(n.raw.data(), v.data(), n.raw.size());
    return n;
}
NtcTensor NtcTensor::scalar_i64(int64_t v) { return from_i64({v}, {1}); }
NtcTensor NtcTensor::scalar_f32(float v) {
    Tensor t({1});
    t[0] = v;
    return from_f32(t);
}
NtcTensor NtcTensor::scalar_f64(double v) { return from_f64({v}, {1}); }
NtcTensor NtcTensor::from_string(const std::string& s) {
    std::vector<uint8_t> v(s.begin(), s.end());
    return from_u8(v, {static_cast<int64_t>(v.size())});
}

Tensor NtcTensor::to_f32() const {
    if (dtype != 0) throw ValidationError("ntc: tensor is not f32");
    Tensor t(dims);
    std::memcpy(t.data.data(), raw.data(), raw.size());
    return t;
}
std::vector<double> NtcTensor::to_f64() const {
    if (dtype != 1) throw ValidationError("ntc: tensor is not f64");
    std::vector<double> v(raw.size() / 8);
    std::memcpy(v.data(), raw.data(), raw.size());
    return v;
}
std::vector<int64_t> NtcTensor::to_i64() const {
    if (dtype != 3) throw ValidationError("ntc: tensor is not i64");
    std::vector<int64_t> v(raw.size() / 8);
    std::memcpy(v.data(), raw.data(), raw.size());
    return v;
}
std::vector<uint8_t> NtcTensor::to_u8() const {
    if (dtype != 2) throw ValidationError("ntc: tensor is not u8");
    return raw;
}
int64_t NtcTensor::scalar_as_i64() const {
    auto v = to_i64();
    if (v.size() != 1) throw ValidationError("ntc: expected scalar");
    return v[0];
}
float NtcTensor::scalar_as_f32() const {
    Tensor t = to_f32();
    if (t.numel() != 1) throw ValidationError("ntc: expected scalar");
    return t[0];
}
double NtcTensor::scalar_as_f64() const {
    auto v = to_f64();
    if (v.size() != 1) throw ValidationError("ntc: expected scalar");
    return v[0];
}
std::string NtcTensor::to_string() const {
    auto v = to_u8();
    return std::string(v.begin(), v.end());
}

const NtcTensor& NtcFile::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw ValidationError("ntc: missing tensor \"" + name + "\"");
    return it->second;
}

std::vector<uint8_t> ntc_serialize(const NtcFile& f) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, static_cast<uint32_t>(f.tensors.size()));
    for (const auto& [name, t] : f.tensors) {
        if (name.size() > 0xffff)
            throw ValidationError("ntc: tensor name too long: " + name);
        if (t.raw.size() != static_cast<size_t>(t.numel()) * dtype_size(t.dtype))
            throw ValidationError("ntc: payload size mismatch for \"" + name + "\"");
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(t.dtype);
        out.push_back(static_cast<uint8_t>(t.dims.size()));
        for (int64_t d : t.dims) put_u64(out, static_cast<uint64_t>(d));
        out.insert(out.end(), t.raw.begin(), t.raw.end());
    }
    return out;
}

NtcFile ntc_parse(const std::vector<uint8_t>& bytes, const std::string& origin) {
    Reader r{bytes, 0, origin};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ValidationError("ntc: " + origin + ": bad magic at offset 0 (expected \"NTC1\")");
    r.pos = 4;
    const uint32_t count = r.u32();
    NtcFile f;
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t nlen = r.u16();
        r.need(nlen, "tensor name");
        std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), nlen);
        r.pos += nlen;
        NtcTensor t;
        t.dtype = r.u8();
        dtype_size(t.dtype);
        const uint8_t rank = r.u8();
        t.dims.resize(rank);
        for (uint8_t d = 0; d < rank; ++d)
            t.dims[d] = static_cast<int64_t>(r.u64());
        const size_t payload =
            static_cast<size_t>(t.numel()) * dtype_size(t.dtype);
        r.need(payload, "payload for tensor \"" + name + "\"");
        t.raw.assign(bytes.begin() + static_cast<long>(r.pos),
                     bytes.begin() + static_cast<long>(r.pos + payload));
        r.pos += payload;
        f.tensors[name] = std::move(t);
    }
    if (r.pos != bytes.size())
        throw ValidationError("ntc: " + origin + ": " +
                              std::to_string(bytes.size() - r.pos) +
                              " trailing bytes at offset " + std::to_string(r.pos));
    return f;
}

NtcFile ntc_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("ntc: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return ntc_parse(bytes, path);
}

void ntc_save(const NtcFile& f, const std::string& path) {
    const std::vector<uint8_t> bytes = ntc_serialize(f);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("ntc: cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ValidationError("ntc: short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ValidationError("ntc: cannot rename " + tmp + " to " + path);
}

}  // namespace tomo

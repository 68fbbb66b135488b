#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tomo/tensor.hpp"

namespace tomo {

// NTC container v1. Layout, all little-endian:
//   magic "NTC1"
//   u32 tensor count
//   per tensor: u16 name length, UTF-8 name, u8 dtype (0=f32, 1=f64, 2=u8,
//   3=i64), u8 rank, rank x u64 dims, row-major payload.
// Tensors are written in name order, so save(load(f)) reproduces f
// byte-for-byte.

struct NtcTensor {
    uint8_t dtype = 0;
    std::vector<int64_t> dims;
    std::vector<uint8_t> raw;

    int64_t numel() const { return Tensor::numel_of(dims); }

    static NtcTensor from_f32(const Tensor& t);
    static NtcTensor from_f64(const std::vector<double>& v,
                              std::vector<int64_t> dims);
    static NtcTensor from_i64(const std::vector<int64_t>& v,
                              std::vector<int64_t> dims);
    static NtcTensor from_u8(const std::vector<uint8_t>& v,
                             std::vector<int64_t> dims);
    static NtcTensor scalar_i64(int64_t v);
    static NtcTensor scalar_f32(float v);
    static NtcTensor scalar_f64(double v);
    static NtcTensor from_string(const std::string& s);

    Tensor to_f32() const;
    std::vector<double> to_f64() const;
    std::vector<int64_t> to_i64() const;
    std::vector<uint8_t> to_u8() const;
    int64_t scalar_as_i64() const;
    float scalar_as_f32() const;
    double scalar_as_f64() const;
    std::string to_string() const;
};

struct NtcFile {
    std::map<std::string, NtcTensor> tensors;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    const NtcTensor& get(const std::string& name) const;
    void put(const std::string& name, NtcTensor t) { tensors[name] = std::move(t); }
};

NtcFile ntc_load(const std::string& path);
// Atomic: writes a sibling temp file, then renames over the target.
void ntc_save(const NtcFile& f, const std::string& path);

std::vector<uint8_t> ntc_serialize(const NtcFile& f);
NtcFile ntc_parse(const std::vector<uint8_t>& bytes, const std::string& origin);

}  // namespace tomo

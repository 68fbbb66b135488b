#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tomo/error.hpp"

namespace tomo {

// Dense row-major float tensor. The whole toolkit runs on fixed small
// shapes, so this stays deliberately plain: dims + flat data.
struct Tensor {
    std::vector<int64_t> dims;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> d) : dims(std::move(d)) {
        data.assign(static_cast<size_t>(numel_of(dims)), 0.0f);
    }
    Tensor(std::vector<int64_t> d, std::vector<float> v)
        : dims(std::move(d)), data(std::move(v)) {
        if (static_cast<int64_t>(data.size()) != numel_of(dims))
            throw ValidationError("tensor: dims/data size mismatch");
    }

    static int64_t numel_of(const std::vector<int64_t>& d) {
        int64_t n = 1;
        for (int64_t e : d) n *= e;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return dims.at(i); }
    size_t rank() const { return dims.size(); }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    float& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // [n, c, h, w] accessor for the conv stack
    float& at4(int64_t n, int64_t c, int64_t y, int64_t x) {
        return data[static_cast<size_t>(((n * dims[1] + c) * dims[2] + y) * dims[3] + x)];
    }
    float at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
        return data[static_cast<size_t>(((n * dims[1] + c) * dims[2] + y) * dims[3] + x)];
    }
    float& at2(int64_t r, int64_t c) {
        return data[static_cast<size_t>(r * dims[1] + c)];
    }
    float at2(int64_t r, int64_t c) const {
        return data[static_cast<size_t>(r * dims[1] + c)];
    }

    bool same_dims(const Tensor& o) const { return dims == o.dims; }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }

    Tensor reshaped(std::vector<int64_t> nd) const {
        if (numel_of(nd) != numel())
            throw ValidationError("tensor: reshape to incompatible size " +
                                  shape_str(nd) + " from " + shape_str(dims));
        Tensor t;
        t.dims = std::move(nd);
        t.data = data;
        return t;
    }

    static std::string shape_str(const std::vector<int64_t>& d) {
        std::string s = "[";
        for (size_t i = 0; i < d.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(d[i]);
        }
        return s + "]";
    }
    std::string shape_str() const { return shape_str(dims); }
};

bool all_finite(const Tensor& t);

// 2D image helpers; images are Tensors with dims [d,d], values in [0,1].
using Image = Tensor;

inline void clamp01(Tensor& t) {
    for (float& v : t.data) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
}

double dot(const Tensor& a, const Tensor& b);
double sum_sq(const Tensor& a);
// mean of (a-b)^2 over all entries, accumulated in double
double mse(const Tensor& a, const Tensor& b);

}  // namespace tomo

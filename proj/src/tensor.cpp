#include "tomo/tensor.hpp"

#include <cmath>

namespace tomo {

bool all_finite(const Tensor& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    const size_t n = std::min(a.data.size(), b.data.size());
    for (size_t i = 0; i < n; ++i)
        s += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
    return s;
}

double sum_sq(const Tensor& a) {
    double s = 0.0;
    for (float v : a.data) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
}

double mse(const Tensor& a, const Tensor& b) {
    if (!a.same_dims(b))
        throw ValidationError("mse: dims mismatch " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        s += d * d;
    }
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

}  // namespace tomo

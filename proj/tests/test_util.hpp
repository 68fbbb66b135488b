#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "tomo/rng.hpp"
#include "tomo/tensor.hpp"

namespace testutil {

inline tomo::Tensor random_tensor(std::vector<int64_t> dims, tomo::Rng& rng,
                                  double lo = -1.0, double hi = 1.0) {
    tomo::Tensor t(std::move(dims));
    for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// values bounded away from zero so kinked activations stay differentiable
// under the finite-difference step
inline tomo::Tensor random_tensor_no_kink(std::vector<int64_t> dims, tomo::Rng& rng) {
    tomo::Tensor t(std::move(dims));
    for (float& v : t.data) {
        const double mag = rng.uniform(0.05, 1.0);
        v = static_cast<float>(rng.uniform01() < 0.5 ? -mag : mag);
    }
    return t;
}

inline double rel_err(double a, double b, double scale) {
    const double denom = std::max({std::fabs(a), std::fabs(b), scale});
    return denom == 0.0 ? 0.0 : std::fabs(a - b) / denom;
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

inline std::string temp_path(const std::string& name) {
    return "/tmp/tomoprior_test_" + name;
}

}  // namespace testutil

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tomo {

// mt19937 with hand-pinned distribution transforms. The standard pins the
// raw mt19937 stream but not the distribution adapters, so we roll our own
// to keep every seeded run reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    uint32_t next_u32() { return gen_(); }

    // uniform in [0,1)
    double uniform01() {
        return static_cast<double>(gen_()) * (1.0 / 4294967296.0);
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // standard normal via Box-Muller; second value cached
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // integer in [0, n)
    uint32_t below(uint32_t n) {
        return static_cast<uint32_t>(uniform01() * static_cast<double>(n)) % n;
    }

    // Fisher-Yates; std::shuffle's draw pattern is implementation-defined
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = below(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace tomo

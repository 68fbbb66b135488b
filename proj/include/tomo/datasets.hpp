#pragma once

#include <cstdint>
#include <string>

#include "tomo/tensor.hpp"

namespace tomo {

struct ImageSet {
    Tensor images;       // [n, d, d], values in [0,1]
    std::string source;  // "idx" or "phantom"
    uint64_t seed = 0;   // phantom sets only

    int64_t count() const { return images.rank() == 3 ? images.dim(0) : 0; }
    int side() const { return images.rank() == 3 ? static_cast<int>(images.dim(1)) : 0; }
    Image get(int64_t i) const;
};

// IDX image file (big-endian, magic 2051 = unsigned byte, rank 3).
// Pixels scaled to [0,1] by /255.
ImageSet load_idx(const std::string& path);
// Writes round(255*x) back out; load_idx(save_idx(s)) is bit-exact.
void save_idx(const ImageSet& set, const std::string& path);

// 1-4 random ellipses per image, additive, clamped to [0,1].
// Deterministic per seed.
ImageSet gen_phantoms(int64_t n, int d, uint64_t seed);

// seeded shuffle + take: reproducible "random test samples"
ImageSet subset(const ImageSet& set, int64_t n, uint64_t seed);

}  // namespace tomo

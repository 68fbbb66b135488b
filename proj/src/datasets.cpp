#include "tomo/datasets.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "tomo/rng.hpp"

namespace tomo {

namespace {

uint32_t read_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

constexpr uint32_t kImageMagic = 2051;

}  // namespace

Image ImageSet::get(int64_t i) const {
    const int d = side();
    Image img({d, d});
    std::copy_n(images.ptr() + i * d * d, static_cast<int64_t>(d) * d, img.ptr());
    return img;
}

ImageSet load_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("idx: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 16)
        throw ValidationError("idx: " + path + ": truncated header at offset " +
                              std::to_string(bytes.size()) + " (need 16 bytes)");
    const uint32_t magic = read_be32(bytes.data());
    if (magic != kImageMagic)
        throw ValidationError("idx: " + path + ": expected image magic 2051, got " +
                              std::to_string(magic) + " at offset 0");
    const uint32_t n = read_be32(bytes.data() + 4);
    const uint32_t h = read_be32(bytes.data() + 8);
    const uint32_t w = read_be32(bytes.data() + 12);
    if (h != w)
        throw ValidationError("idx: " + path + ": non-square images " +
                              std::to_string(h) + "x" + std::to_string(w));
    const size_t need = 16 + static_cast<size_t>(n) * h * w;
    if (bytes.size() != need)
        throw ValidationError("idx: " + path + ": payload is " +
                              std::to_string(bytes.size() - 16) + " bytes at offset 16, expected " +
                              std::to_string(need - 16));
    ImageSet set;
    set.source = "idx";
    set.images = Tensor({static_cast<int64_t>(n), static_cast<int64_t>(h),
                         static_cast<int64_t>(w)});
    for (size_t i = 0; i < static_cast<size_t>(n) * h * w; ++i)
        set.images[static_cast<int64_t>(i)] = static_cast<float>(bytes[16 + i]) / 255.0f;
    return set;
}

void save_idx(const ImageSet& set, const std::string& path) {
    const int64_t n = set.count();
    const int d = set.side();
    std::vector<uint8_t> out;
    out.reserve(16 + static_cast<size_t>(n) * d * d);
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<uint32_t>(n));
    write_be32(out, static_cast<uint32_t>(d));
    write_be32(out, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < set.images.numel(); ++i) {
        const float v = set.images[i];
        const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        out.push_back(static_cast<uint8_t>(std::lround(c * 255.0f)));
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("idx: cannot write " + path);
    os.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
}

ImageSet gen_phantoms(int64_t n, int d, uint64_t seed) {
    if (n < 1) throw ValidationError("gen_phantoms: n must be >= 1");
    if (d < 8) throw ValidationError("gen_phantoms: d must be >= 8");
    ImageSet set;
    set.source = "phantom";
    set.seed = seed;
    set.images = Tensor({n, d, d});
    Rng rng(seed);
    for (int64_t img = 0; img < n; ++img) {
        float* px = set.images.ptr() + img * d * d;
        const int ne = 1 + static_cast<int>(rng.below(4));
        for (int e = 0; e < ne; ++e) {
            const double cx = rng.uniform(0.22, 0.78) * d;
            const double cy = rng.uniform(0.22, 0.78) * d;
            const double a = rng.uniform(0.08, 0.30) * d;
            const double b = rng.uniform(0.08, 0.30) * d;
            const double phi = rng.uniform(0.0, 3.14159265358979323846);
            const double inten = rng.uniform(0.35, 0.95);
            const double cp = std::cos(phi), sp = std::sin(phi);
            for (int y = 0; y < d; ++y) {
                for (int x = 0; x < d; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    const double u = (dx * cp + dy * sp) / a;
                    const double v = (-dx * sp + dy * cp) / b;
                    if (u * u + v * v <= 1.0)
                        px[y * d + x] += static_cast<float>(inten);
                }
            }
        }
        for (int i = 0; i < d * d; ++i)
            px[i] = px[i] > 1.0f ? 1.0f : px[i];
    }
    return set;
}

ImageSet subset(const ImageSet& set, int64_t n, uint64_t seed) {
    const int64_t total = set.count();
    if (n > total)
        throw ValidationError("subset: requested " + std::to_string(n) + " of " +
                              std::to_string(total));
    std::vector<int64_t> idx(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    const int d = set.side();
    ImageSet out;
    out.source = set.source;
    out.seed = seed;
    out.images = Tensor({n, d, d});
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(set.images.ptr() + idx[static_cast<size_t>(i)] * d * d,
                    static_cast<int64_t>(d) * d, out.images.ptr() + i * d * d);
    return out;
}

}  // namespace tomo

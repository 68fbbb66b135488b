#include "tomo/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <vector>

namespace tomo {

void write_png_gray(const Tensor& image, const std::string& path) {
    if (image.rank() != 2)
        throw ValidationError("png: expected a 2-d image, got " + image.shape_str());
    const int h = static_cast<int>(image.dim(0));
    const int w = static_cast<int>(image.dim(1));

    std::vector<uint8_t> bytes(static_cast<size_t>(h) * w);
    for (int64_t i = 0; i < image.numel(); ++i) {
        float v = image[i];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        bytes[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }

    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw ValidationError("png: cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw ValidationError("png: libpng failure writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
                 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, bytes.data() + static_cast<size_t>(y) * w);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Tensor montage_grid(const Tensor& images, int cols) {
    if (images.rank() != 3)
        throw ValidationError("montage: expected [n,d,d], got " + images.shape_str());
    if (cols < 1) throw ValidationError("montage: cols must be >= 1");
    const int64_t n = images.dim(0);
    const int d = static_cast<int>(images.dim(1));
    const int rows = static_cast<int>((n + cols - 1) / cols);
    Tensor grid({static_cast<int64_t>(rows) * d, static_cast<int64_t>(cols) * d});
    for (int64_t i = 0; i < n; ++i) {
        const int r = static_cast<int>(i) / cols;
        const int c = static_cast<int>(i) % cols;
        for (int y = 0; y < d; ++y)
            for (int x = 0; x < d; ++x)
                grid[(static_cast<int64_t>(r) * d + y) * (static_cast<int64_t>(cols) * d) +
                     c * d + x] = images[(i * d + y) * d + x];
    }
    return grid;
}

}  // namespace tomo

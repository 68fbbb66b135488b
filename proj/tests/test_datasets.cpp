#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <vector>

#include "test_util.hpp"
#include "tomo/containers.hpp"
#include "tomo/datasets.hpp"
#include "tomo/ntc.hpp"

using namespace tomo;

namespace {

void be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

// hand-built IDX bytes, independent of save_idx
std::vector<uint8_t> idx_fixture(uint32_t magic) {
    std::vector<uint8_t> v;
    be32(v, magic);
    be32(v, 2);  // two images
    be32(v, 4);
    be32(v, 4);
    for (int i = 0; i < 32; ++i) v.push_back(static_cast<uint8_t>(i * 8 + 3));
    return v;
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& v) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size()));
}

std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("idx fixture round-trips bit-exactly") {
    const std::string path = testutil::temp_path("fixture.idx");
    const std::vector<uint8_t> bytes = idx_fixture(2051);
    write_bytes(path, bytes);

    const ImageSet set = load_idx(path);
    CHECK(set.count() == 2);
    CHECK(set.side() == 4);
    CHECK(set.source == "idx");
    CHECK(set.images[0] == doctest::Approx(3.0f / 255.0f));
    CHECK(set.images[31] == doctest::Approx(251.0f / 255.0f));
    for (float v : set.images.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    const std::string out = testutil::temp_path("fixture_out.idx");
    save_idx(set, out);
    CHECK(read_bytes(out) == bytes);
}

TEST_CASE("label-file magic is rejected") {
    const std::string path = testutil::temp_path("labels.idx");
    write_bytes(path, idx_fixture(2049));
    try {
        load_idx(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("expected image magic") != std::string::npos);
    }
}

TEST_CASE("truncated idx payload reports the byte offset") {
    std::vector<uint8_t> bytes = idx_fixture(2051);
    bytes.resize(bytes.size() - 5);
    const std::string path = testutil::temp_path("trunc.idx");
    write_bytes(path, bytes);
    try {
        load_idx(path);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}

TEST_CASE("phantom generation is deterministic per seed") {
    const ImageSet a = gen_phantoms(8, 28, 42);
    const ImageSet b = gen_phantoms(8, 28, 42);
    const ImageSet c = gen_phantoms(8, 28, 43);
    CHECK(a.images.data == b.images.data);
    CHECK(a.images.data != c.images.data);
}

TEST_CASE("phantom pixels stay in [0,1]") {
    const ImageSet set = gen_phantoms(64, 28, 7);
    for (float v : set.images.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("mean phantom foreground fraction sits in the frozen band") {
    const ImageSet set = gen_phantoms(1000, 28, 0);
    double frac = 0.0;
    for (float v : set.images.data)
        if (v > 0.02f) frac += 1.0;
    frac /= static_cast<double>(set.images.numel());
    CHECK(frac > 0.05);
    CHECK(frac < 0.6);
}

TEST_CASE("image sets round-trip through NTC bit-exactly") {
    const ImageSet set = gen_phantoms(5, 16, 9);
    const std::string path = testutil::temp_path("set.ntc");
    save_imageset(set, path);
    const ImageSet back = load_imageset(path);
    CHECK(back.images.dims == set.images.dims);
    CHECK(back.images.data == set.images.data);
    CHECK(back.source == set.source);
    CHECK(back.seed == set.seed);

    // a second save writes identical bytes
    const std::string path2 = testutil::temp_path("set2.ntc");
    save_imageset(back, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("seeded subset selection is reproducible") {
    const ImageSet set = gen_phantoms(50, 16, 1);
    const ImageSet s1 = subset(set, 10, 5);
    const ImageSet s2 = subset(set, 10, 5);
    const ImageSet s3 = subset(set, 10, 6);
    CHECK(s1.images.data == s2.images.data);
    CHECK(s1.images.data != s3.images.data);
    CHECK_THROWS_AS(subset(set, 51, 0), ValidationError);
}

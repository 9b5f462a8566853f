#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unistd.h>

#include "magdr/error.hpp"
#include "magdr/fixture.hpp"
#include "magdr/hash.hpp"
#include "magdr/io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace magdr;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("magdr_imagecore_" + std::to_string(::getpid())) / name;
    fs::create_directories(p.parent_path());
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

MaskTensor half_planes(int w, int h) {
    std::vector<double> left(w * h), right(w * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) (x < w / 2 ? left : right)[y * w + x] = 1.0;
    return MaskTensor(w, h, {left, right}, {"left", "right"}, 0);
}

}  // namespace

TEST_CASE("save_image byte encoding") {
    CHECK(to_byte(0.5) == 128);
    CHECK(to_byte(1.0) == 255);
    CHECK(to_byte(0.0) == 0);
    CHECK(to_byte(-0.3) == 0);
    CHECK(to_byte(1.7) == 255);
}

TEST_CASE("load_image on constant files") {
    for (double v : {0.0, 1.0}) {
        const auto p = scratch(v == 0 ? "zeros.png" : "ones.png");
        save_image(Image(5, 4, 3, v), p);
        const Image img = load_image(p);
        CHECK(img.width == 5);
        CHECK(img.height == 4);
        CHECK(img.channels == 3);
        for (double px : img.data) CHECK(px == v);
    }
}

TEST_CASE("checkerboard round trip is bit exact") {
    for (const char* ext : {".png", ".ppm", ".pgm"}) {
        const int c = std::string(ext) == ".pgm" ? 1 : 3;
        Image board(9, 7, c);
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 9; ++x)
                for (int ch = 0; ch < c; ++ch) board.at(y, x, ch) = (x + y) % 2;
        const auto p = scratch(std::string("board") + ext);
        save_image(board, p);
        CHECK(load_image(p) == board);
    }
}

TEST_CASE("save, load, save gives identical bytes") {
    const Image img = oracle::random_image(13, 11, 3, 5);
    const auto a = scratch("rt_a.png"), b = scratch("rt_b.png");
    save_image(img, a);
    save_image(load_image(a), b);
    CHECK(slurp(a) == slurp(b));
    CHECK(load_image(a) == quantize_8bit(img));
}

TEST_CASE("image io errors") {
    CHECK_THROWS_AS(load_image(scratch("missing.png")), ValidationError);
    CHECK_THROWS_AS(save_image(Image(2, 2, 3), scratch("x.bmp")), ValidationError);
    std::ofstream(scratch("junk.png")) << "not an image";
    CHECK_THROWS(load_image(scratch("junk.png")));
}

TEST_CASE("mask manifests") {
    SUBCASE("complementary half planes sum to exactly one") {
        const auto p = scratch("half/masks.json");
        save_mask_manifest(half_planes(8, 6), p);
        const MaskTensor m = load_mask_manifest(p);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 8; ++x) CHECK(m.at(0, y, x) + m.at(1, y, x) == 1.0);
    }
    SUBCASE("uniform thirds are unchanged by renormalization") {
        std::vector<std::vector<double>> r(3, std::vector<double>(16, 1.0 / 3.0));
        double dev = -1;
        const MaskTensor m = MaskTensor::renormalized(4, 4, r, {"a", "b", "c"}, 0, &dev);
        CHECK(dev < 1e-15);
        for (int i = 0; i < 3; ++i)
            for (double v : m.region(i)) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("sum 0.9 everywhere is renormalized and reported") {
        const fs::path dir = scratch("nine/x").parent_path();
        Image a(4, 4, 1, 0.5), b(4, 4, 1, 0.4);
        save_image(a, dir / "a.png");
        save_image(b, dir / "b.png");
        nlohmann::json j = {{"target_index", 1},
                            {"regions",
                             {{{"region_name", "a"}, {"raster_path", "a.png"}},
                              {{"region_name", "b"}, {"raster_path", "b.png"}}}}};
        std::ofstream(dir / "m.json") << j.dump();
        MaskLoadInfo info;
        const MaskTensor m = load_mask_manifest(dir / "m.json", &info);
        CHECK(info.max_deviation > 0.05);
        CHECK_FALSE(info.warnings.empty());
        CHECK(m.target_index() == 1);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(std::abs(m.at(0, y, x) + m.at(1, y, x) - 1.0) <= 1e-6);
    }
    SUBCASE("invalid target index") {
        CHECK_THROWS_AS(MaskTensor(2, 2, {std::vector<double>(4, 1.0)}, {"all"}, 3), ValidationError);
    }
    SUBCASE("non-convex direct construction is rejected") {
        CHECK_THROWS_AS(MaskTensor(2, 2, {std::vector<double>(4, 0.5)}, {"all"}, 0), ValidationError);
    }
    SUBCASE("missing raster") {
        std::ofstream(scratch("bad.json")) << R"({"target_index":0,"regions":[{"region_name":"a","raster_path":"nope.png"}]})";
        CHECK_THROWS(load_mask_manifest(scratch("bad.json")));
    }
}

TEST_CASE("apply_mask") {
    const Image img = oracle::random_image(6, 5, 3, 11);
    SUBCASE("all-ones mask is the identity") {
        const MaskTensor one(6, 5, {std::vector<double>(30, 1.0)}, {"all"}, 0);
        CHECK(apply_mask(img, 0, one) == img);
    }
    SUBCASE("half plane on a constant image") {
        const MaskTensor m = half_planes(6, 5);
        const Image out = apply_mask(Image(6, 5, 3, 0.7), 1, m);
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 6; ++x)
                for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == (x < 3 ? 0.0 : 0.7));
    }
    SUBCASE("linearity") {
        const MaskTensor m = oracle::random_masks(6, 5, 3, 2);
        const Image b = oracle::random_image(6, 5, 3, 12);
        Image comb = img;
        for (std::size_t i = 0; i < comb.size(); ++i) comb.data[i] = 0.3 * img.data[i] - 1.7 * b.data[i];
        const Image lhs = apply_mask(comb, 1, m), ma = apply_mask(img, 1, m), mb = apply_mask(b, 1, m);
        for (std::size_t i = 0; i < lhs.size(); ++i)
            CHECK(std::abs(lhs.data[i] - (0.3 * ma.data[i] - 1.7 * mb.data[i])) < 1e-9);
    }
}

TEST_CASE("blend_regions") {
    SUBCASE("replicated image comes back unchanged") {
        const MaskTensor m = oracle::random_masks(7, 7, 4, 3);
        const Image x = oracle::random_image(7, 7, 3, 4);
        CHECK(blend_regions({x, x, x, x}, m) == x);
    }
    SUBCASE("black and white halves") {
        const Image out = blend_regions({Image(4, 2, 1, 0.0), Image(4, 2, 1, 1.0)}, half_planes(4, 2));
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 4; ++x) CHECK(out.at(y, x, 0) == (x < 2 ? 0.0 : 1.0));
    }
    SUBCASE("matches the per-pixel weighted sum") {
        for (std::uint64_t s = 0; s < 5; ++s) {
            const MaskTensor m = oracle::random_masks(9, 8, 3, 100 + s);
            std::vector<Image> imgs;
            for (int i = 0; i < 3; ++i) imgs.push_back(oracle::random_image(9, 8, 3, 200 + 10 * s + i));
            const Image got = blend_regions(imgs, m), want = oracle::blend(imgs, m);
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-12);
        }
    }
    SUBCASE("size mismatch") {
        CHECK_THROWS_AS(blend_regions({Image(4, 2, 1)}, half_planes(4, 2)), ValidationError);
    }
}

TEST_CASE("synth_fixture") {
    FixtureSpec spec;
    spec.seed = 42;
    const Fixture a = synth_fixture(spec), b = synth_fixture(spec);
    CHECK(a.image == b.image);
    CHECK(a.masks == b.masks);
    CHECK(a.masks.size() == 5);
    CHECK(a.masks.target_index() == 2);
    CHECK(a.masks.name(2) == "hair");
    CHECK(in_unit_range(a.image));
    spec.seed = 43;
    CHECK_FALSE(synth_fixture(spec).image == a.image);

    SUBCASE("in-memory fixtures equal their 8-bit files") {
        const auto p = scratch("fx/img.png");
        save_image(a.image, p);
        CHECK(load_image(p) == a.image);
        save_mask_manifest(a.masks, scratch("fx/masks.json"));
        CHECK(load_mask_manifest(scratch("fx/masks.json")) == a.masks);
    }
    SUBCASE("convexity and positive mass over 100 seeds") {
        for (std::uint64_t s = 0; s < 100; ++s) {
            spec.seed = s;
            const Fixture f = synth_fixture(spec);
            for (int i = 0; i < f.masks.size(); ++i) CHECK(f.masks.mass(i) > 0);
            double worst = 0;
            for (int y = 0; y < f.masks.height(); ++y)
                for (int x = 0; x < f.masks.width(); ++x) {
                    double sum = 0;
                    for (int i = 0; i < f.masks.size(); ++i) sum += f.masks.at(i, y, x);
                    worst = std::max(worst, std::abs(sum - 1));
                }
            CHECK(worst <= 1e-6);
        }
    }
    SUBCASE("invalid specs") {
        FixtureSpec bad;
        bad.target_index = 7;
        CHECK_THROWS_AS(synth_fixture(bad), ValidationError);
        bad = {};
        bad.size = 2;
        CHECK_THROWS_AS(synth_fixture(bad), ValidationError);
    }
}

TEST_CASE("rng streams and hashing") {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng c(1);
    double lo = 1, hi = 0, m = 0;
    for (int i = 0; i < 20000; ++i) {
        const double u = c.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        m += c.normal();
    }
    CHECK(lo >= 0);
    CHECK(hi < 1);
    CHECK(std::abs(m / 20000) < 0.05);
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

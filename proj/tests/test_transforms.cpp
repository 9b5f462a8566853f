#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "magdr/error.hpp"
#include "magdr/metrics.hpp"
#include "magdr/transforms.hpp"
#include "oracles.hpp"

using namespace magdr;

TEST_CASE("spec parsing") {
    CHECK(parse_spec("identity") == make_spec(Category::Identity));
    CHECK(parse_spec("gauss_blur:1.5") == make_spec(Category::GaussBlur, 1.5));
    CHECK(parse_spec("gauss_noise:0.02@7") == make_spec(Category::GaussNoise, 0.02, 7));
    CHECK(spec_to_string(parse_spec("gauss_noise:0.02@7")) == "gauss_noise:0.02@7");
    CHECK(spec_to_string(parse_spec("dct_quant:50")) == "dct_quant:50");
    CHECK(parse_spec_list("identity, median:3,bit_depth:4").size() == 3);
    CHECK_THROWS_AS(parse_spec("sharpen:2"), ValidationError);
    CHECK_THROWS_AS(parse_spec("gauss_blur"), ValidationError);
    CHECK_THROWS_AS(parse_spec("gauss_blur:abc"), ValidationError);
    CHECK_THROWS_AS(parse_spec("median:4"), ValidationError);
    CHECK_THROWS_AS(parse_spec("dct_quant:0"), ValidationError);
    CHECK_THROWS_AS(parse_spec("bit_depth:9"), ValidationError);
    CHECK_THROWS_AS(parse_spec("resize_cycle:1.5"), ValidationError);
    CHECK_THROWS_AS(parse_spec("gauss_blur:-1"), ValidationError);
}

TEST_CASE("apply basics") {
    const Image x = oracle::random_image(16, 16, 3, 1);
    CHECK(apply(make_spec(Category::Identity), x) == x);
    CHECK(apply(make_spec(Category::BitDepth, 1), Image(2, 2, 1, 0.6)) == Image(2, 2, 1, 1.0));
    const Image blurred = apply(make_spec(Category::GaussBlur, 1.0), Image(16, 16, 3, 0.37));
    for (double v : blurred.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
    const CatalogConfig defaults = CatalogConfig::defaults();
    for (Category c : all_categories()) {
        const auto& g = defaults.grid(c);
        for (double p : g.params) {
            const Image y = apply(make_spec(c, p, 3), x);
            CHECK(y.same_shape(x));
            CHECK(in_unit_range(y));
            CHECK(apply(make_spec(c, p, 3), x) == y);
        }
    }
}

TEST_CASE("noise seeds") {
    const Image x(8, 8, 1, 0.5);
    CHECK(apply(make_spec(Category::GaussNoise, 0.05, 1), x) == apply(make_spec(Category::GaussNoise, 0.05, 1), x));
    CHECK_FALSE(apply(make_spec(Category::GaussNoise, 0.05, 1), x) == apply(make_spec(Category::GaussNoise, 0.05, 2), x));
}

TEST_CASE("median and mean filters") {
    Image x(5, 5, 1, 0.2);
    x.at(2, 2, 0) = 1.0;  // isolated spike
    const Image med = apply(make_spec(Category::Median, 3), x);
    for (double v : med.data) CHECK(v == 0.2);
    const Image mean = apply(make_spec(Category::MeanSmooth, 3), x);
    CHECK(mean.at(2, 2, 0) == doctest::Approx(0.2 + 0.8 / 9));
    CHECK(mean.at(0, 0, 0) == doctest::Approx(0.2));
}

TEST_CASE("dct_quant") {
    for (int q : {90, 50, 30, 10}) {
        const Image x = oracle::random_image(20, 13, 3, 2 + q);
        const Image got = apply(make_spec(Category::DctQuant, q), x), want = oracle::dct_quant(x, q);
        double err = 0;
        for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, std::abs(got.data[i] - want.data[i]));
        CHECK(err < 1e-9);
    }
    const Image smooth = apply(make_spec(Category::GaussBlur, 2.0), oracle::random_image(32, 32, 3, 3));
    CHECK(mse(apply(make_spec(Category::DctQuant, 100), smooth), smooth) < 1e-4);
}

TEST_CASE("mildest moves less than strongest") {
    const CatalogConfig cfg = CatalogConfig::defaults();
    for (const auto& g : cfg.grids) {
        if (g.category == Category::Identity) continue;
        int wins = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            const Image x = oracle::random_image(32, 32, 3, 100 + s);
            const double mild = mse(apply(make_spec(g.category, g.params.front(), s), x), x);
            const double strong = mse(apply(make_spec(g.category, g.params.back(), s), x), x);
            wins += mild < strong;
        }
        CHECK_MESSAGE(wins >= 15, category_name(g.category));
    }
}

TEST_CASE("kernel larger than the image") {
    CHECK_THROWS_AS(apply(make_spec(Category::GaussBlur, 2.0), Image(4, 4, 1)), ValidationError);
    CHECK_THROWS_AS(apply(make_spec(Category::Median, 5), Image(3, 3, 1)), ValidationError);
    CHECK_NOTHROW(apply(make_spec(Category::Median, 5), Image(5, 5, 1)));
}

TEST_CASE("surrogate adjoints") {
    const Image x = oracle::random_image(8, 8, 3, 4, 0.3, 0.7);
    const Image u = oracle::random_image(8, 8, 3, 5, -1, 1);
    CHECK(smooth_vjp(make_spec(Category::Identity), x, u) == u);
    CHECK(smooth_vjp(make_spec(Category::BitDepth, 4), x, u) == u);
    CHECK(smooth_vjp(make_spec(Category::DctQuant, 50), x, u) == u);
    CHECK(smooth_vjp(make_spec(Category::GaussNoise, 0.02, 1), x, u) == u);
    SUBCASE("symmetric blur kernel: adjoint equals blur away from borders") {
        const Image big = oracle::random_image(32, 32, 1, 6);
        Image w(32, 32, 1, 0.0);
        for (int yy = 10; yy < 22; ++yy)
            for (int xx = 10; xx < 22; ++xx) w.at(yy, xx, 0) = big.at(yy, xx, 0);
        const TransformSpec b = make_spec(Category::GaussBlur, 1.0);
        const Image adj = smooth_vjp(b, big, w), fwd = apply(b, w);
        for (std::size_t i = 0; i < adj.size(); ++i) CHECK(adj.data[i] == doctest::Approx(fwd.data[i]).epsilon(1e-12));
    }
    SUBCASE("exact adjoints match central differences") {
        const CatalogConfig defaults = CatalogConfig::defaults();
        for (Category c : all_categories()) {
            if (!has_exact_adjoint(c)) continue;
            for (double p : defaults.grid(c).params) {
                const TransformSpec spec = make_spec(c, p);
                for (std::uint64_t s = 0; s < 20; ++s) {
                    const Image xs = oracle::random_image(8, 8, 3, 500 + s, 0.3, 0.7);
                    const Image us = oracle::random_image(8, 8, 3, 600 + s, -1, 1);
                    const Image vs = oracle::random_image(8, 8, 3, 700 + s, -1, 1);
                    const double fd = oracle::directional_fd([&](const Image& z) { return apply(spec, z); }, xs, us, vs);
                    CHECK_MESSAGE(std::abs(oracle::dot(smooth_vjp(spec, xs, us), vs) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)),
                                  spec_to_string(spec));
                }
            }
        }
    }
    CHECK(has_exact_adjoint(Category::GaussBlur));
    CHECK_FALSE(has_exact_adjoint(Category::Median));
}

TEST_CASE("catalog") {
    const LayerCatalog l0 = catalog(0);
    CHECK(l0.specs.size() == 22);
    CHECK(categories_of(l0).size() == 8);
    for (int l = 0; l < 4; ++l) {
        const LayerCatalog cl = catalog(l);
        CHECK(cl.layer_index == l);
        CHECK(cl.specs.front().category == Category::Identity);
        CHECK(cl.specs == l0.specs);
    }
    CHECK_THROWS_AS(catalog(-1), ValidationError);
    const auto mild = mildest_specs();
    CHECK(mild.size() == 8);
    CHECK(spec_to_string(mild[1]) == "dct_quant:90");
    CHECK(spec_to_string(mild[5]) == "gauss_noise:0.01@17");

    SUBCASE("configured per-layer subsets keep identity") {
        namespace fs = std::filesystem;
        const fs::path p = fs::temp_directory_path() / ("magdr_catalog_" + std::to_string(::getpid()) + ".json");
        std::ofstream(p) << R"({"grids":[{"category":"identity","params":[0]},{"category":"gauss_blur","params":[0.5,1]},
            {"category":"median","params":[3]}],"layers":[["gauss_blur"],["median","gauss_blur"]]})";
        const CatalogConfig cfg = CatalogConfig::from_json_file(p);
        CHECK(catalog(0, cfg).specs.size() == 3);
        CHECK(categories_of(catalog(1, cfg)).size() == 3);
        CHECK(catalog(5, cfg).specs == catalog(1, cfg).specs);
        std::ofstream(p) << R"({"grids":[{"category":"median","params":[4]}]})";
        CHECK_THROWS_AS(CatalogConfig::from_json_file(p), ValidationError);
        fs::remove(p);
    }
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "magdr/error.hpp"
#include "magdr/experiments.hpp"
#include "magdr/io.hpp"

using namespace magdr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("magdr_harness_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.fixtures.spec.size = 32;
    cfg.fixtures.count = 2;
    cfg.fixtures.calibration_count = 20;
    cfg.attack.iterations = 10;
    return cfg;
}

}  // namespace

TEST_CASE("precision, recall and F1") {
    CHECK(f1_score(0.96, 1.00) == doctest::Approx(0.98).epsilon(0.005));
    CHECK(f1_score(0, 0) == 0.0);
    CHECK(f1_score(1, 1) == 1.0);
    for (double p : {0.1, 0.5, 0.9})
        for (double r : {0.2, 0.7, 1.0}) CHECK(f1_score(p, r) == doctest::Approx(2 * p * r / (p + r)));

    const PrfRow perfect = prf({1, 1, 0, 0}, {1, 1, 0, 0});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    const PrfRow mixed = prf({1, 1, 1, 0, 0}, {1, 0, 1, 1, 0});
    CHECK(mixed.tp == 2);
    CHECK(mixed.fp == 1);
    CHECK(mixed.fn == 1);
    CHECK(mixed.tn == 1);
    CHECK(mixed.f1 == doctest::Approx(f1_score(2.0 / 3, 2.0 / 3)));
    const PrfRow none = prf({0, 0}, {1, 0});
    CHECK(none.precision == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK_THROWS_AS(prf({1}, {1, 0}), ValidationError);
}

TEST_CASE("config") {
    SUBCASE("defaults round trip through INI text") {
        const ExperimentConfig cfg;
        const ExperimentConfig back = ExperimentConfig::from_ini_string(cfg.to_ini());
        CHECK(back.to_ini() == cfg.to_ini());
        CHECK(back.detector.lambda == 1000.0);
        CHECK(back.eval.baselines.size() == 4);
    }
    SUBCASE("edited keys survive") {
        const ExperimentConfig cfg = ExperimentConfig::from_ini_string(
            "[attack]\neps = 0.03\nmethod = cw\n[detector]\nconsistency_set = identity,gauss_blur:0.5\n"
            "[eval]\nadaptive_iterations = 5,20\n");
        CHECK(cfg.attack.eps == 0.03);
        CHECK(cfg.attack.method == AttackMethod::Cw);
        CHECK(cfg.detector.consistency_specs.size() == 2);
        CHECK(cfg.eval.adaptive_iterations == std::vector<int>{5, 20});
        CHECK(ExperimentConfig::from_ini_string(cfg.to_ini()).to_ini() == cfg.to_ini());
    }
    SUBCASE("hash ignores workers and output directory") {
        ExperimentConfig a, b;
        b.eval.workers = 4;
        b.eval.output_dir = "elsewhere";
        CHECK(a.hash() == b.hash());
        b.attack.eps = 0.04;
        CHECK(a.hash() != b.hash());
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(ExperimentConfig::from_ini_string("[attack]\nepsilon = 0.1\n"), ValidationError);
        CHECK_THROWS_AS(ExperimentConfig::from_ini_string("[attack]\neps = lots\n"), ValidationError);
        CHECK_THROWS_AS(ExperimentConfig::from_ini_file("/nonexistent/magdr.ini"), ValidationError);
        ExperimentConfig overlap;
        overlap.fixtures.calibration_seed = overlap.fixtures.spec.seed + 10;
        CHECK_THROWS_AS(overlap.validate(), ValidationError);
        ExperimentConfig ext;
        ext.generator.type = "external";
        CHECK_THROWS_AS(ext.validate(), ValidationError);
    }
}

TEST_CASE("datasets") {
    FixtureSection fs_;
    fs_.spec.size = 32;
    SUBCASE("save and load, n = 1") {
        const Dataset d = make_dataset(fs_, 5, 1);
        REQUIRE(d.size() == 1);
        const fs::path dir = scratch("n1");
        const Dataset back = load_dataset(save_dataset(d, dir));
        REQUIRE(back.size() == 1);
        CHECK(back[0].id == d[0].id);
        CHECK(back[0].seed == 5);
        CHECK(back[0].image == d[0].image);
        CHECK(*back[0].masks == *d[0].masks);
        CHECK(back[0].condition.attribute_index == d[0].condition.attribute_index);
        CHECK_FALSE(back[0].clean.has_value());
    }
    SUBCASE("regeneration is byte-identical and every file verifies") {
        const fs::path a = scratch("a"), b = scratch("b");
        save_dataset(make_dataset(fs_, 0, 3), a);
        save_dataset(make_dataset(fs_, 0, 3), b);
        int files = 0;
        for (const auto& e : fs::recursive_directory_iterator(a)) {
            if (!e.is_regular_file()) continue;
            const fs::path rel = fs::relative(e.path(), a);
            CHECK(slurp(e.path()) == slurp(b / rel));
            ++files;
        }
        CHECK(files == 1 + 3 * (3 + 5));  // manifest; image, condition, mask manifest and 5 rasters each
        for (const auto& s : load_dataset(a / "manifest.json")) {
            CHECK(in_unit_range(s.image));
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    double sum = 0;
                    for (int r = 0; r < s.masks->size(); ++r) sum += s.masks->at(r, y, x);
                    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
                }
        }
    }
    SUBCASE("attacked samples keep their clean image") {
        ExperimentConfig cfg = small_config();
        const Dataset clean = make_dataset(cfg.fixtures, 0, 1);
        const Dataset adv = attack_dataset(clean, cfg, cfg.attack);
        REQUIRE(adv[0].clean.has_value());
        CHECK(*adv[0].clean == clean[0].image);
        const Dataset back = load_dataset(save_dataset(adv, scratch("adv")));
        REQUIRE(back[0].clean.has_value());
        CHECK(*back[0].clean == clean[0].image);
    }
    CHECK_THROWS_AS(load_dataset("/nonexistent/manifest.json"), ValidationError);
}

TEST_CASE("seed ranges and iteration lists") {
    CHECK(seed_range(0, 100) == "0-99");
    CHECK(seed_range(7, 1) == "7-7");
    CHECK_NOTHROW(validate_iterations({1, 10, 100}));
    CHECK_THROWS_AS(validate_iterations({0}), ValidationError);
    CHECK_THROWS_AS(validate_iterations({}), ValidationError);
    CHECK_THROWS_AS(validate_iterations({10, 10}), ValidationError);
    try {
        validate_iterations({0, 10});
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("positives") != std::string::npos);
    }
}

TEST_CASE("report CSVs carry provenance and fixed headers") {
    const Provenance p{"abc123", "0-9", "note=1"};
    DetectionTable t;
    t.rows.push_back({"pgd", "combined", 1, 0.5, f1_score(1, 0.5), 5, 0, 10, 5});
    const std::string d = detection_csv(t, p);
    CHECK(d.rfind("# tool=" + tool_version() + "\n# config_hash=abc123\n# seeds=0-9\n# note=1\n", 0) == 0);
    CHECK(d.find("attack,detector,precision,recall,f1,tp,fp,tn,fn\npgd,combined,1,0.5,") != std::string::npos);
    CHECK(detection_samples_csv(t, p).find("id,label,flags,flagged_regions,s_dist,s_cons,s_final,dd,cd,verdict\n") !=
          std::string::npos);
    CHECK(reconstruction_csv({}, p).find("defense,mse_i,ssim_i,psnr_i,featsim_i,mse_o,ssim_o,psnr_o,featsim_o\n") !=
          std::string::npos);
    const std::string c = curve_csv({{10, 0.5, 0.25, 0.75}}, p);
    CHECK(c.find("iters,f1_dd,f1_cd,f1_combined\n10,0.5,0.25,0.75\n") != std::string::npos);
    const fs::path out = scratch("csv") / "nested" / "r.csv";
    write_text(out, c);
    CHECK(slurp(out) == c);
}

TEST_CASE("reconstruction table on a tiny set") {
    ExperimentConfig cfg = small_config();
    cfg.fixtures.count = 1;
    cfg.eval.baselines = {make_spec(Category::Identity)};
    RecnetCatalog cat;
    for (int l = 0; l < 3; ++l) cat.layers.push_back({l, mildest_specs()});
    const Dataset clean = make_dataset(cfg.fixtures, 0, 1);
    DetectorConfig det = cfg.detector;
    det.tau_regions = 1;
    det.tau_cons = 0.0;
    const ReconstructionTable t = evaluate_reconstruction(clean, det, cat, cfg);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0].defense == "no_defense");
    CHECK(t.rows[1].defense == "magdr");
    CHECK(t.rows[2].defense == "uniform:identity");
    // the identity baseline passes the attacked input through
    CHECK(t.rows[2].mse_i == t.rows[0].mse_i);
    CHECK(t.rows[2].psnr_o == t.rows[0].psnr_o);
    CHECK(t.rows[0].mse_o > 0.0);
    REQUIRE(t.samples.size() == 1);
    CHECK(t.samples[0].defense.reports.back().s_final <= t.samples[0].defense.reports.front().s_final);
}

TEST_CASE("clean inputs are left alone by defend when the detector stays quiet") {
    ExperimentConfig cfg = small_config();
    const Dataset clean = make_dataset(cfg.fixtures, 0, 2);
    DetectorConfig det = cfg.detector;
    det.tau_regions = 99;
    det.tau_cons = 1e9;
    RecnetCatalog cat;
    for (int l = 0; l < 3; ++l) cat.layers.push_back({l, mildest_specs()});
    for (const auto& s : clean) {
        const DefenseResult r = defend(s.image, make_context(s, cfg, det), cat, cfg.recnet.defense);
        CHECK(mse(r.image, s.image) == 0.0);
        CHECK(r.pipelines.empty());
    }
}

TEST_CASE("detection evaluation requires disjoint seeds") {
    ExperimentConfig cfg = small_config();
    const Dataset test = make_dataset(cfg.fixtures, 0, 2);
    const Dataset calib = make_dataset(cfg.fixtures, 1, 20);
    CHECK_THROWS_AS(evaluate_detection(test, calib, cfg), ValidationError);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "magdr/attacks.hpp"
#include "magdr/detector.hpp"
#include "magdr/fixture.hpp"
#include "magdr/generator.hpp"
#include "magdr/recnet.hpp"

namespace magdr {

struct FixtureSection {
    FixtureSpec spec;                        // spec.seed is the first test seed
    int count = 100;                         // test fixtures: seeds seed .. seed+count-1
    int calibration_count = 100;             // disjoint clean calibration set
    std::uint64_t calibration_seed = 100000;
    Condition condition;                     // attribute_index follows spec.target_index
};

struct GeneratorSection {
    std::string type = "toy";  // toy | external
    ToyParams toy;
    std::string command;       // external only
};

struct RecnetSection {
    DefenseSettings defense;
    int train_count = 10;
    std::uint64_t train_seed = 200000;
    std::string catalog_path;       // pretrained catalog (pretrain-recnet output)
    std::string grid_config_path;   // optional catalog override JSON
};

struct EvalSection {
    std::string output_dir = "out";
    int workers = 1;
    std::vector<int> adaptive_iterations = {10, 100};
    int adaptive_count = 50;  // clean + attacked pairs per curve point
    std::vector<TransformSpec> baselines = parse_spec_list("dct_quant:50,gauss_blur:1,gauss_noise:0.02@17,bit_depth:4");
};

struct ExperimentConfig {
    FixtureSection fixtures;
    GeneratorSection generator;
    AttackConfig attack;
    DetectorConfig detector;
    double target_fpr = 0.05;
    RecnetSection recnet;
    EvalSection eval;

    // Sections [fixtures], [generator], [attack], [detector], [recnet], [eval].
    // Unknown keys are rejected.
    static ExperimentConfig from_ini_file(const std::filesystem::path& path);
    static ExperimentConfig from_ini_string(const std::string& text);
    // Canonical text form: every key, fixed order, full precision.
    std::string to_ini() const;
    std::string hash() const;  // SHA-256 prefix of to_ini(), ignoring workers and output_dir
    void validate() const;
};

}  // namespace magdr

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "magdr/config.hpp"
#include "magdr/dataset.hpp"
#include "magdr/recnet.hpp"

namespace magdr {

std::string tool_version();

// Header lines ("# key=value") embedded at the top of every CSV report.
struct Provenance {
    std::string config_hash;
    std::string seeds;
    std::string extra;  // optional, e.g. calibration hash

    std::string csv_header() const;
};

struct PrfRow {
    std::string attack;
    std::string detector;  // DD, CD, combined
    double precision = 0, recall = 0, f1 = 0;
    int tp = 0, fp = 0, tn = 0, fn = 0;
};

double f1_score(double precision, double recall);  // 2pr/(p+r), 0 when p+r = 0
// Positive class = disrupted (1).
PrfRow prf(const std::vector<int>& predicted, const std::vector<int>& labels);

struct SampleVerdict {
    std::string id;
    int label = 0;
    DetectionReport report;
};

struct DetectionTable {
    std::vector<PrfRow> rows;
    DetectorConfig calibrated;
    std::vector<SampleVerdict> samples;
};

// ScoreContext for one sample under the experiment's generator and detector.
ScoreContext make_context(const Sample& s, const ExperimentConfig& cfg, const DetectorConfig& det);

// Per-sample attack seeds derive from cfg.attack.seed and the fixture seed.
AttackResult attack_sample(const Sample& s, const Generator& gen, const AttackConfig& attack);
Dataset attack_dataset(const Dataset& clean, const ExperimentConfig& cfg, const AttackConfig& attack);

DetectorConfig calibrate_on(const Dataset& calibration, const ExperimentConfig& cfg);

// Balanced set: every clean test sample plus its attacked counterpart.
DetectionTable evaluate_detection(const Dataset& test_clean, const Dataset& calibration, const ExperimentConfig& cfg);
DetectionTable evaluate_detection_calibrated(const Dataset& test_clean, const Dataset& attacked,
                                             const DetectorConfig& det, const ExperimentConfig& cfg);

RecnetCatalog pretrain_from_config(const ExperimentConfig& cfg);

struct ReconRow {
    std::string defense;
    double mse_i = 0, ssim_i = 0, psnr_i = 0, featsim_i = 0;
    double mse_o = 0, ssim_o = 0, psnr_o = 0, featsim_o = 0;
};

struct ReconSample {
    std::string id;
    DefenseResult defense;
};

struct ReconstructionTable {
    std::vector<ReconRow> rows;  // no_defense, magdr, then uniform baselines
    std::vector<ReconSample> samples;
};

ReconstructionTable evaluate_reconstruction(const Dataset& test_clean, const DetectorConfig& det,
                                            const RecnetCatalog& cat, const ExperimentConfig& cfg);

struct CurvePoint {
    int iterations = 0;
    double f1_dd = 0, f1_cd = 0, f1_combined = 0;
};

// Iterations must be strictly ascending and >= 1.
void validate_iterations(const std::vector<int>& iterations);
std::vector<CurvePoint> adaptive_curve(const Dataset& test_clean, const DetectorConfig& det,
                                       const std::vector<int>& iterations, const ExperimentConfig& cfg);

std::string detection_csv(const DetectionTable& t, const Provenance& p);
std::string detection_samples_csv(const DetectionTable& t, const Provenance& p);
std::string reconstruction_csv(const ReconstructionTable& t, const Provenance& p);
std::string curve_csv(const std::vector<CurvePoint>& curve, const Provenance& p);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string seed_range(std::uint64_t first, int n);

}  // namespace magdr

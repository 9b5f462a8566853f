#pragma once

#include <memory>
#include <string>
#include <vector>

#include "magdr/generator.hpp"
#include "magdr/image.hpp"
#include "magdr/metrics.hpp"
#include "magdr/transforms.hpp"

namespace magdr {

using WeightVector = std::array<double, DistanceVector::kSize>;

// Uniform over every component except psnr_deficit, which gets weight 0.
WeightVector default_weights();

struct DetectorConfig {
    double lambda = 1000.0;
    WeightVector w = default_weights();
    int tau_regions = 1;
    double tau_cons = 0.03;
    std::vector<TransformSpec> consistency_specs = mildest_specs();
    MetricOptions metrics;
    std::string calibration_hash;  // empty until calibrate() ran

    void validate() const;
};

struct DetectionReport {
    std::vector<int> region_flags;                 // V_i; entry at the target index is always 0
    std::vector<DistanceVector> region_distances;  // d̄_i for every region (target included)
    DistanceVector benchmark;                      // d̄_c
    double s_dist = 0.0;
    double s_cons = 0.0;
    double s_final = 0.0;
    int flagged_regions = 0;
    bool dd_disrupted = false;  // flagged_regions >= tau_regions
    bool cd_disrupted = false;  // s_cons > tau_cons
    bool disrupted = false;     // OR of the two
    int tau_regions = 0;
    double tau_cons = 0.0;
    double lambda = 0.0;
};

// d̄_i = distance_vector(M_i ∘ x, M_i ∘ y) / S_i, componentwise.
std::vector<DistanceVector> region_distances(const Image& x, const Image& y, const MaskTensor& masks,
                                             const MetricOptions& opts = {});

struct DistortionFlags {
    std::vector<int> flags;  // size N, 0 at c
    double s_dist = 0.0;
};

// V_i = 1 iff max over components with w_m > 0 of (d̄_i,m - d̄_c,m) >= 0, i != c.
// s_dist = Σ_{i≠c} Σ_m w_m sigmoid(d̄_i,m).
DistortionFlags distortion_flags(const std::vector<DistanceVector>& dbar, int c, const WeightVector& w);

// Σ_m w_m σ_m with σ the population standard deviation over k of
// d^k = distance_vector(G(x̂), G(f_k(x̂))).
double consistency_score(const Image& x_hat, const Condition& c, const Generator& gen,
                         const std::vector<TransformSpec>& specs, const WeightVector& w,
                         const MetricOptions& opts = {});
// Same, reusing y = G(x̂).
double consistency_score(const Image& x_hat, const Image& y, const Condition& c, const Generator& gen,
                         const std::vector<TransformSpec>& specs, const WeightVector& w, const MetricOptions& opts);

DetectionReport decide(const Image& x_hat, const Condition& c, const MaskTensor& masks, const Generator& gen,
                       const DetectorConfig& cfg);

struct CleanSample {
    const Image* image;
    const MaskTensor* masks;
    Condition condition;
    std::shared_ptr<const Generator> generator;
};

struct CalibrationStats {
    std::vector<double> s_cons;
    std::vector<int> flagged_regions;
};

// Scores of every clean sample under base (thresholds ignored).
CalibrationStats calibration_stats(const std::vector<CleanSample>& clean, const DetectorConfig& base, int workers = 1);

// tau_cons = nearest-rank (1 - fpr) quantile of clean s_cons (index ceil((1-fpr) n) - 1
// of the ascending scores); tau_regions = smallest integer >= 1 whose clean
// false-flag rate is <= fpr. Needs >= 20 samples and 0 < fpr < 0.5.
DetectorConfig calibrate_from_stats(const CalibrationStats& stats, const DetectorConfig& base, double target_fpr,
                                    const std::string& set_hash);
DetectorConfig calibrate(const std::vector<CleanSample>& clean, const DetectorConfig& base, double target_fpr,
                         int workers = 1);

// SHA-256 over the 8-bit encodings of images, masks and conditions.
std::string calibration_set_hash(const std::vector<CleanSample>& clean);

}  // namespace magdr

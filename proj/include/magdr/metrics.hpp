#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "magdr/image.hpp"

namespace magdr {

double mse(const Image& a, const Image& b);
// 10 log10(1 / mse), peak 1. Capped at 99 dB (and returned as 99 when mse < 1e-10).
double psnr(const Image& a, const Image& b);
constexpr double kPsnrCap = 99.0;

// Mean local SSIM over all valid window positions and channels; uniform
// window, C1 = 0.01^2, C2 = 0.03^2, population (1/n) moments.
double ssim(const Image& a, const Image& b, int window = 8);

struct FeatureMap {
    int channels = 0, height = 0, width = 0;
    std::vector<double> data;  // channel-major (C, H, W)
};
using FeatureStack = std::vector<FeatureMap>;

// Fixed random convolutional pyramid: per layer a 3x3 zero-padded
// convolution (no bias), ReLU, then 2x2 average pooling.
class FeatureExtractor {
public:
    static constexpr std::array<int, 4> kDefaultWidths = {8, 16, 32, 64};

    FeatureExtractor(std::uint64_t seed, int in_channels,
                     std::vector<int> widths = {kDefaultWidths.begin(), kDefaultWidths.end()});

    FeatureStack extract(const Image& image) const;
    int layers() const { return static_cast<int>(widths_.size()); }
    int in_channels() const { return in_channels_; }
    // kernels[l] has layout (out, in, 3, 3)
    const std::vector<double>& kernels(int layer) const { return kernels_.at(layer); }
    const std::vector<int>& widths() const { return widths_; }

private:
    int in_channels_;
    std::vector<int> widths_;
    std::vector<std::vector<double>> kernels_;
    std::vector<std::vector<float>> kernels_f_;  // computation runs in single precision
};

// Shared, lazily built extractor for (seed, in_channels) with default widths.
std::shared_ptr<const FeatureExtractor> feature_extractor(std::uint64_t seed, int in_channels);

FeatureStack feature_stack(const Image& image, std::uint64_t seed);

struct MetricOptions {
    std::uint64_t feature_seed = 1234;
    double lp = 1.0;        // exponent of the per-layer feature distance
    int ssim_window = 8;
};

// Component order is fixed; every component is a dissimilarity.
struct DistanceVector {
    static constexpr int kFeatureLayers = 4;
    static constexpr int kSize = 3 + kFeatureLayers + 1;
    enum Index { kMse = 0, kOneMinusSsim = 1, kPsnrDeficit = 2, kFeat1 = 3, kCosine = 7 };

    std::array<double, kSize> values{};

    double& operator[](int i) { return values[i]; }
    double operator[](int i) const { return values[i]; }
    static const std::array<std::string, kSize>& names();
};

DistanceVector distance_vector(const Image& a, const Image& b, const MetricOptions& opts = {});
// Variant reusing precomputed feature stacks (from the extractor selected by opts).
DistanceVector distance_vector(const Image& a, const FeatureStack& fa, const Image& b, const FeatureStack& fb,
                               const MetricOptions& opts = {});

// Cosine similarity of the flattened layer-(L-1) features; 1 when both are zero.
double feature_cosine_similarity(const FeatureStack& fa, const FeatureStack& fb);

}  // namespace magdr

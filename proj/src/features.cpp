#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "magdr/error.hpp"
#include "magdr/metrics.hpp"
#include "magdr/rng.hpp"

namespace magdr {

FeatureExtractor::FeatureExtractor(std::uint64_t seed, int in_channels, std::vector<int> widths)
    : in_channels_(in_channels), widths_(std::move(widths)) {
    if (in_channels < 1) throw ValidationError("feature extractor: in_channels must be positive");
    if (widths_.size() < 2) throw ValidationError("feature extractor: need at least 2 layers");
    Rng rng(seed);
    int cin = in_channels;
    for (int cout : widths_) {
        const double scale = std::sqrt(2.0 / (9.0 * cin));
        std::vector<double> k(static_cast<std::size_t>(cout) * cin * 9);
        for (double& v : k) v = rng.normal() * scale;
        kernels_f_.emplace_back(k.begin(), k.end());
        kernels_.push_back(std::move(k));
        cin = cout;
    }
}

namespace {

struct Plane {
    int channels = 0, height = 0, width = 0;
    std::vector<float> data;
};

// 3x3 zero-padded convolution + ReLU + 2x2 average pool. im2col, then
// accumulate per pixel block; single precision.
Plane conv_relu_pool(const Plane& in, const std::vector<float>& k, int cout) {
    const int H = in.height, W = in.width, cin = in.channels;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    thread_local std::vector<float> col, acc;
    col.assign(plane * cin * 9, 0.0f);
    for (int ci = 0; ci < cin; ++ci) {
        const float* src = &in.data[ci * plane];
        for (int t = 0; t < 9; ++t) {
            const int dy = t / 3 - 1, dx = t % 3 - 1;
            float* dst = &col[(static_cast<std::size_t>(ci) * 9 + t) * plane];
            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) dst[y * W + x] = src[(y + dy) * W + x + dx];
        }
    }
    acc.assign(plane * cout, 0.0f);
    const int taps = cin * 9;
    constexpr std::size_t kBlock = 512;
    for (std::size_t p0 = 0; p0 < plane; p0 += kBlock) {
        const std::size_t n = std::min(kBlock, plane - p0);
        for (int co = 0; co < cout; ++co) {
            const float* kk = &k[static_cast<std::size_t>(co) * taps];
            float* a = &acc[co * plane + p0];
            for (int t = 0; t < taps; ++t) {
                const float w = kk[t];
                const float* c = &col[static_cast<std::size_t>(t) * plane + p0];
                for (std::size_t p = 0; p < n; ++p) a[p] += w * c[p];
            }
        }
    }
    Plane out;
    out.channels = cout;
    out.height = H / 2;
    out.width = W / 2;
    out.data.resize(static_cast<std::size_t>(cout) * out.height * out.width);
    for (int co = 0; co < cout; ++co) {
        const float* pa = &acc[co * plane];
        float* o = &out.data[static_cast<std::size_t>(co) * out.height * out.width];
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                const float* r0 = &pa[static_cast<std::size_t>(2 * y) * W + 2 * x];
                const float* r1 = r0 + W;
                o[y * out.width + x] = 0.25f * (std::max(r0[0], 0.0f) + std::max(r0[1], 0.0f) +
                                                std::max(r1[0], 0.0f) + std::max(r1[1], 0.0f));
            }
    }
    return out;
}

}  // namespace

FeatureStack FeatureExtractor::extract(const Image& image) const {
    if (image.channels != in_channels_) throw ValidationError("feature extractor: channel count mismatch");
    const int need = 1 << layers();
    if (image.width < need || image.height < need)
        throw ValidationError("feature stack needs images of at least " + std::to_string(need) + "x" +
                              std::to_string(need));
    Plane cur;
    cur.channels = image.channels;
    cur.height = image.height;
    cur.width = image.width;
    cur.data.resize(image.size());
    const std::size_t plane = image.pixel_count();
    for (std::size_t p = 0; p < plane; ++p)
        for (int ch = 0; ch < image.channels; ++ch)
            cur.data[ch * plane + p] = static_cast<float>(image.data[p * image.channels + ch]);
    FeatureStack stack;
    for (int l = 0; l < layers(); ++l) {
        cur = conv_relu_pool(cur, kernels_f_[l], widths_[l]);
        stack.push_back({cur.channels, cur.height, cur.width, std::vector<double>(cur.data.begin(), cur.data.end())});
    }
    return stack;
}

std::shared_ptr<const FeatureExtractor> feature_extractor(std::uint64_t seed, int in_channels) {
    static std::mutex mu;
    static std::map<std::pair<std::uint64_t, int>, std::shared_ptr<const FeatureExtractor>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{seed, in_channels}];
    if (!slot) slot = std::make_shared<const FeatureExtractor>(seed, in_channels);
    return slot;
}

FeatureStack feature_stack(const Image& image, std::uint64_t seed) {
    return feature_extractor(seed, image.channels)->extract(image);
}

}  // namespace magdr

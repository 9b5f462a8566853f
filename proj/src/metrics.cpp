#include <algorithm>
#include <cmath>

#include "magdr/error.hpp"
#include "magdr/metrics.hpp"

namespace magdr {

double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b, int window) {
    require_same_shape(a, b, "ssim");
    if (window < 1) throw ValidationError("ssim: window must be positive");
    if (a.width < window || a.height < window)
        throw ValidationError("ssim: image smaller than the " + std::to_string(window) + "x" +
                              std::to_string(window) + " window");
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    const int W = a.width, H = a.height, C = a.channels;
    const int sw = W + 1;
    // Summed-area tables of a, b, a^2, b^2, ab for one channel at a time.
    std::vector<double> sa((H + 1) * sw), sb(sa.size()), saa(sa.size()), sbb(sa.size()), sab(sa.size());
    const double inv_n = 1.0 / (static_cast<double>(window) * window);
    double total = 0.0;
    for (int ch = 0; ch < C; ++ch) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double va = a.at(y, x, ch), vb = b.at(y, x, ch);
                const int i = (y + 1) * sw + (x + 1);
                const int up = y * sw + (x + 1), left = (y + 1) * sw + x, diag = y * sw + x;
                sa[i] = va + sa[up] + sa[left] - sa[diag];
                sb[i] = vb + sb[up] + sb[left] - sb[diag];
                saa[i] = va * va + saa[up] + saa[left] - saa[diag];
                sbb[i] = vb * vb + sbb[up] + sbb[left] - sbb[diag];
                sab[i] = va * vb + sab[up] + sab[left] - sab[diag];
            }
        auto box = [&](const std::vector<double>& s, int y, int x) {
            const int y1 = y + window, x1 = x + window;
            return s[y1 * sw + x1] - s[y * sw + x1] - s[y1 * sw + x] + s[y * sw + x];
        };
        for (int y = 0; y + window <= H; ++y)
            for (int x = 0; x + window <= W; ++x) {
                const double ma = box(sa, y, x) * inv_n, mb = box(sb, y, x) * inv_n;
                const double va = box(saa, y, x) * inv_n - ma * ma;
                const double vb = box(sbb, y, x) * inv_n - mb * mb;
                const double cov = box(sab, y, x) * inv_n - ma * mb;
                total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            }
    }
    const double count = static_cast<double>(C) * (H - window + 1) * (W - window + 1);
    return total / count;
}

const std::array<std::string, DistanceVector::kSize>& DistanceVector::names() {
    static const std::array<std::string, kSize> n = {"mse",       "one_minus_ssim", "psnr_deficit", "feat_l1_1",
                                                     "feat_l1_2", "feat_l1_3",      "feat_l1_4",    "cosine_distance"};
    return n;
}

double feature_cosine_similarity(const FeatureStack& fa, const FeatureStack& fb) {
    if (fa.size() != fb.size() || fa.size() < 2) throw ValidationError("feature stacks do not match");
    const auto& u = fa[fa.size() - 2].data;
    const auto& v = fb[fb.size() - 2].data;
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 && vv == 0.0) return 1.0;
    if (uu == 0.0 || vv == 0.0) return 0.0;
    return uv / (std::sqrt(uu) * std::sqrt(vv));
}

DistanceVector distance_vector(const Image& a, const FeatureStack& fa, const Image& b, const FeatureStack& fb,
                               const MetricOptions& opts) {
    require_same_shape(a, b, "distance_vector");
    if (static_cast<int>(fa.size()) != DistanceVector::kFeatureLayers || fb.size() != fa.size())
        throw ValidationError("distance_vector: expected 4-layer feature stacks");
    if (!(opts.lp > 0)) throw ValidationError("distance_vector: lp must be positive");
    DistanceVector d;
    const double m = mse(a, b);
    d[DistanceVector::kMse] = m;
    d[DistanceVector::kOneMinusSsim] = std::max(0.0, 1.0 - ssim(a, b, opts.ssim_window));
    const double p = m < 1e-10 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
    d[DistanceVector::kPsnrDeficit] = (kPsnrCap - p) / kPsnrCap;
    for (int l = 0; l < DistanceVector::kFeatureLayers; ++l) {
        const auto& u = fa[l].data;
        const auto& v = fb[l].data;
        double s = 0.0;
        if (opts.lp == 1.0) {
            for (std::size_t i = 0; i < u.size(); ++i) s += std::abs(u[i] - v[i]);
            s /= static_cast<double>(u.size());
        } else {
            for (std::size_t i = 0; i < u.size(); ++i) s += std::pow(std::abs(u[i] - v[i]), opts.lp);
            s = std::pow(s / static_cast<double>(u.size()), 1.0 / opts.lp);
        }
        d[DistanceVector::kFeat1 + l] = s;
    }
    d[DistanceVector::kCosine] = std::max(0.0, 1.0 - feature_cosine_similarity(fa, fb));
    return d;
}

DistanceVector distance_vector(const Image& a, const Image& b, const MetricOptions& opts) {
    require_same_shape(a, b, "distance_vector");
    const auto fx = feature_extractor(opts.feature_seed, a.channels);
    return distance_vector(a, fx->extract(a), b, fx->extract(b), opts);
}

}  // namespace magdr

#pragma once

// Independent brute-force references used by the unit and acceptance tests.
// Written from the definitions, sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "magdr/image.hpp"
#include "magdr/metrics.hpp"
#include "magdr/rng.hpp"

namespace oracle {

using magdr::Image;

inline Image random_image(int w, int h, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    magdr::Rng rng(seed);
    Image img(w, h, c);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

inline double mse(const Image& a, const Image& b) {
    long double s = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
            for (int c = 0; c < a.channels; ++c) {
                const long double d = a.at(y, x, c) - b.at(y, x, c);
                s += d * d;
            }
    return static_cast<double>(s / (static_cast<long double>(a.width) * a.height * a.channels));
}

inline double psnr(const Image& a, const Image& b) {
    const double m = oracle::mse(a, b);
    if (m < 1e-10) return 99.0;
    return std::min(99.0, -10.0 * std::log10(m));
}

// Mean over every w x w window position and channel, population moments.
inline double ssim(const Image& a, const Image& b, int w = 8) {
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    double total = 0;
    long count = 0;
    for (int c = 0; c < a.channels; ++c)
        for (int y0 = 0; y0 + w <= a.height; ++y0)
            for (int x0 = 0; x0 + w <= a.width; ++x0) {
                double ma = 0, mb = 0;
                for (int y = y0; y < y0 + w; ++y)
                    for (int x = x0; x < x0 + w; ++x) {
                        ma += a.at(y, x, c);
                        mb += b.at(y, x, c);
                    }
                const double n = static_cast<double>(w) * w;
                ma /= n;
                mb /= n;
                double va = 0, vb = 0, cov = 0;
                for (int y = y0; y < y0 + w; ++y)
                    for (int x = x0; x < x0 + w; ++x) {
                        const double da = a.at(y, x, c) - ma, db = b.at(y, x, c) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va /= n;
                vb /= n;
                cov /= n;
                total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                ++count;
            }
    return total / static_cast<double>(count);
}

inline Image masked(const Image& img, const magdr::MaskTensor& m, int i) {
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, x, c) * m.at(i, y, x);
    return out;
}

inline Image blend(const std::vector<Image>& imgs, const magdr::MaskTensor& m) {
    Image out(imgs[0].width, imgs[0].height, imgs[0].channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < out.channels; ++c) {
                double s = 0;
                for (int i = 0; i < m.size(); ++i) s += m.at(i, y, x) * imgs[i].at(y, x, c);
                out.at(y, x, c) = s;
            }
    return out;
}

// Random convex masks: positive weights normalized per pixel.
inline magdr::MaskTensor random_masks(int w, int h, int n, std::uint64_t seed, int target = 0) {
    magdr::Rng rng(seed);
    std::vector<std::vector<double>> r(n, std::vector<double>(static_cast<std::size_t>(w) * h));
    for (std::size_t p = 0; p < r[0].size(); ++p) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += (r[i][p] = rng.uniform(0.05, 1.0));
        for (int i = 0; i < n; ++i) r[i][p] /= s;
    }
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("r" + std::to_string(i));
    return magdr::MaskTensor::renormalized(w, h, std::move(r), names, target);
}

// Per layer: direct 3x3 zero-padded convolution with the extractor's kernels,
// ReLU, 2x2 average pool. Double precision throughout.
inline magdr::FeatureStack conv_features(const magdr::FeatureExtractor& fx, const Image& img) {
    int C = img.channels, H = img.height, W = img.width;
    std::vector<double> cur(static_cast<std::size_t>(C) * H * W);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) cur[(c * H + y) * W + x] = img.at(y, x, c);
    magdr::FeatureStack out;
    for (int l = 0; l < fx.layers(); ++l) {
        const auto& k = fx.kernels(l);
        const int Co = fx.widths()[l];
        std::vector<double> conv(static_cast<std::size_t>(Co) * H * W);
        for (int o = 0; o < Co; ++o)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double s = 0;
                    for (int c = 0; c < C; ++c)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int yy = y + ky - 1, xx = x + kx - 1;
                                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                                s += k[((o * C + c) * 3 + ky) * 3 + kx] * cur[(c * H + yy) * W + xx];
                            }
                    conv[(o * H + y) * W + x] = std::max(0.0, s);
                }
        magdr::FeatureMap m;
        m.channels = Co;
        m.height = H / 2;
        m.width = W / 2;
        m.data.resize(static_cast<std::size_t>(Co) * m.height * m.width);
        for (int o = 0; o < Co; ++o)
            for (int y = 0; y < m.height; ++y)
                for (int x = 0; x < m.width; ++x)
                    m.data[(o * m.height + y) * m.width + x] =
                        0.25 * (conv[(o * H + 2 * y) * W + 2 * x] + conv[(o * H + 2 * y) * W + 2 * x + 1] +
                                conv[(o * H + 2 * y + 1) * W + 2 * x] + conv[(o * H + 2 * y + 1) * W + 2 * x + 1]);
        out.push_back(m);
        cur = m.data;
        C = Co;
        H = m.height;
        W = m.width;
    }
    return out;
}

// 8x8 blockwise DCT-II from the cosine sum, quantized with the quality-scaled
// standard luminance table, inverse DCT; replicate padding at ragged edges.
inline Image dct_quant(const Image& x, int quality) {
    static const int T[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                              14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                              18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                              49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    auto alpha = [](int u) { return u == 0 ? std::sqrt(0.125) : 0.5; };
    auto cosv = [](int x, int u) { return std::cos((2 * x + 1) * u * std::numbers::pi / 16); };
    Image out(x.width, x.height, x.channels);
    for (int c = 0; c < x.channels; ++c)
        for (int by = 0; by < x.height; by += 8)
            for (int bx = 0; bx < x.width; bx += 8) {
                double f[8][8], F[8][8];
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        f[i][j] = 255 * x.at(std::min(by + i, x.height - 1), std::min(bx + j, x.width - 1), c) - 128;
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) {
                        double s = 0;
                        for (int i = 0; i < 8; ++i)
                            for (int j = 0; j < 8; ++j) s += f[i][j] * cosv(i, u) * cosv(j, v);
                        s *= alpha(u) * alpha(v);
                        const double q = std::clamp((T[u * 8 + v] * scale + 50) / 100, 1, 255);
                        F[u][v] = std::round(s / q) * q;
                    }
                for (int i = 0; i < 8 && by + i < x.height; ++i)
                    for (int j = 0; j < 8 && bx + j < x.width; ++j) {
                        double s = 0;
                        for (int u = 0; u < 8; ++u)
                            for (int v = 0; v < 8; ++v) s += alpha(u) * alpha(v) * F[u][v] * cosv(i, u) * cosv(j, v);
                        out.at(by + i, bx + j, c) = std::clamp((s + 128) / 255, 0.0, 1.0);
                    }
            }
    return out;
}

inline double dot(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

// Central difference of x -> <f(x), u> along v.
inline double directional_fd(const std::function<Image(const Image&)>& f, const Image& x, const Image& u,
                             const Image& v, double h = 1e-4) {
    Image xp = x, xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp.data[i] += h * v.data[i];
        xm.data[i] -= h * v.data[i];
    }
    return (dot(f(xp), u) - dot(f(xm), u)) / (2 * h);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(b)); }

}  // namespace oracle

#include "magdr/fixture.hpp"

#include <cmath>
#include <string>

#include "linear.hpp"
#include "magdr/error.hpp"
#include "magdr/io.hpp"
#include "magdr/rng.hpp"

namespace magdr {

namespace {

const char* kNames[] = {"face", "hair", "eyes", "mouth"};

std::string region_name(int i, int n_templates) {
    if (i == 0) return "background";
    const int t = (i - 1) % n_templates;
    const int round = (i - 1) / n_templates;
    std::string base = t < 4 && n_templates == 4 ? kNames[t] : "region" + std::to_string(t + 1);
    return round == 0 ? base : base + "_" + std::to_string(round + 1);
}

}  // namespace

Fixture synth_fixture(const FixtureSpec& spec) {
    if (spec.n_regions < 2) throw ValidationError("synth_fixture: n_regions must be >= 2");
    if (spec.size < 8) throw ValidationError("synth_fixture: size must be >= 8 to place regions");
    if (spec.channels != 1 && spec.channels != 3) throw ValidationError("synth_fixture: channels must be 1 or 3");
    if (spec.target_index < 0 || spec.target_index >= spec.n_regions)
        throw ValidationError("synth_fixture: target_index out of range");
    if (spec.layout.empty()) throw ValidationError("synth_fixture: empty ellipse layout");
    if (spec.texture < 0 || spec.mask_sigma < 0) throw ValidationError("synth_fixture: negative texture or sigma");

    const int n = spec.size;
    const int nt = static_cast<int>(spec.layout.size());
    Rng rng(spec.seed);
    std::vector<int> label(static_cast<std::size_t>(n) * n, 0);
    std::vector<std::vector<double>> colors;
    std::vector<double> bg(spec.channels);
    for (double& v : bg) v = rng.uniform(spec.color_lo, spec.color_hi);
    colors.push_back(bg);
    for (int i = 1; i < spec.n_regions; ++i) {
        EllipseTemplate e = spec.layout[(i - 1) % nt];
        e.cx += rng.uniform(-spec.center_jitter, spec.center_jitter);
        e.cy += rng.uniform(-spec.center_jitter, spec.center_jitter);
        e.ax *= rng.uniform(1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter);
        e.ay *= rng.uniform(1.0 - spec.axis_jitter, 1.0 + spec.axis_jitter);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double u = ((x + 0.5) / n - e.cx) / e.ax;
                const double v = ((y + 0.5) / n - e.cy) / e.ay;
                if (u * u + v * v <= 1.0) label[static_cast<std::size_t>(y) * n + x] = i;
            }
        std::vector<double> col(spec.channels);
        for (double& v : col) v = rng.uniform(spec.color_lo, spec.color_hi);
        colors.push_back(col);
    }

    // Smoothed indicators; a normalized smoothing operator preserves the
    // partition of unity, renormalization only absorbs rounding.
    std::vector<std::vector<double>> regions(spec.n_regions);
    std::vector<std::string> names;
    const Lin1D smooth = spec.mask_sigma > 0 ? gaussian_stencil(n, spec.mask_sigma, 2) : Lin1D::identity(n);
    for (int i = 0; i < spec.n_regions; ++i) {
        Image ind(n, n, 1, 0.0);
        for (std::size_t p = 0; p < label.size(); ++p) ind.data[p] = label[p] == i ? 1.0 : 0.0;
        ind = apply_y(smooth, apply_x(smooth, ind));
        for (double& v : ind.data) v = std::max(v, 0.0);
        regions[i] = std::move(ind.data);
        names.push_back(region_name(i, nt));
    }
    for (int i = 0; i < spec.n_regions; ++i) {
        double s = 0.0;
        for (double v : regions[i]) s += v;
        if (!(s > 0.0))
            throw ValidationError("synth_fixture: region " + std::to_string(i) + " is fully covered; size too small");
    }
    MaskTensor masks = MaskTensor::renormalized(n, n, std::move(regions), std::move(names), spec.target_index);

    Image img(n, n, spec.channels, 0.0);
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
        for (int ch = 0; ch < spec.channels; ++ch) {
            double v = 0.0;
            for (int i = 0; i < spec.n_regions; ++i) v += masks.region(i)[p] * colors[i][ch];
            img.data[p * spec.channels + ch] = v;
        }
    for (double& v : img.data) v = std::clamp(v + spec.texture * rng.normal(), 0.0, 1.0);
    if (spec.quantize) return {quantize_8bit(std::move(img)), quantize_masks(masks)};
    return {std::move(img), std::move(masks)};
}

}  // namespace magdr

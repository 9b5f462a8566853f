#include "magdr/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "magdr/error.hpp"

namespace magdr {

Image::Image(int w, int h, int c, double fill) : width(w), height(h), channels(c) {
    if (w < 1 || h < 1 || c < 1) throw ValidationError("image dimensions must be positive");
    data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b))
        throw ValidationError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width) + "x" +
                              std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                              std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                              std::to_string(b.channels) + ")");
}

bool in_unit_range(const Image& img) {
    return std::all_of(img.data.begin(), img.data.end(),
                       [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

Image clamp01(Image img) {
    for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

namespace {

void check_layout(int width, int height, const std::vector<std::vector<double>>& regions,
                  const std::vector<std::string>& names, int target_index) {
    if (width < 1 || height < 1) throw ValidationError("mask dimensions must be positive");
    if (regions.empty()) throw ValidationError("mask tensor needs at least one region");
    if (names.size() != regions.size()) throw ValidationError("mask tensor: one name per region required");
    if (target_index < 0 || target_index >= static_cast<int>(regions.size()))
        throw ValidationError("mask tensor: target_index " + std::to_string(target_index) + " out of range");
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (const auto& r : regions) {
        if (r.size() != n) throw ValidationError("mask tensor: region raster size mismatch");
        for (double v : r)
            if (!std::isfinite(v) || v < 0.0 || v > 1.0 + MaskTensor::kConvexityTolerance)
                throw ValidationError("mask tensor: weights must lie in [0,1]");
    }
}

}  // namespace

MaskTensor::MaskTensor(int width, int height, std::vector<std::vector<double>> regions,
                       std::vector<std::string> names, int target_index)
    : width_(width), height_(height), regions_(std::move(regions)), names_(std::move(names)), target_(target_index) {
    check_layout(width_, height_, regions_, names_, target_);
    const std::size_t n = static_cast<std::size_t>(width_) * height_;
    for (std::size_t p = 0; p < n; ++p) {
        double s = 0.0;
        for (const auto& r : regions_) s += r[p];
        if (std::abs(s - 1.0) > kConvexityTolerance)
            throw ValidationError("mask tensor: pixel " + std::to_string(p) + " weights sum to " + std::to_string(s));
    }
    mass_.reserve(regions_.size());
    for (std::size_t i = 0; i < regions_.size(); ++i) {
        double s = 0.0;
        for (double v : regions_[i]) s += v;
        if (!(s > 0.0)) throw ValidationError("mask tensor: region '" + names_[i] + "' has zero mass");
        mass_.push_back(s);
    }
}

MaskTensor MaskTensor::renormalized(int width, int height, std::vector<std::vector<double>> regions,
                                    std::vector<std::string> names, int target_index, double* max_deviation) {
    check_layout(width, height, regions, names, target_index);
    const std::size_t n = static_cast<std::size_t>(width) * height;
    double worst = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        double s = 0.0;
        for (const auto& r : regions) s += r[p];
        if (!(s > 0.0)) throw ValidationError("mask tensor: no region claims pixel " + std::to_string(p));
        worst = std::max(worst, std::abs(s - 1.0));
        for (auto& r : regions) r[p] /= s;
    }
    if (max_deviation) *max_deviation = worst;
    return MaskTensor(width, height, std::move(regions), std::move(names), target_index);
}

MaskTensor MaskTensor::with_target(int target_index) const {
    MaskTensor copy = *this;
    if (target_index < 0 || target_index >= size())
        throw ValidationError("mask tensor: target_index " + std::to_string(target_index) + " out of range");
    copy.target_ = target_index;
    return copy;
}

Image apply_mask(const Image& image, int mask_index, const MaskTensor& masks) {
    if (mask_index < 0 || mask_index >= masks.size())
        throw ValidationError("apply_mask: region index " + std::to_string(mask_index) + " out of range");
    if (image.width != masks.width() || image.height != masks.height())
        throw ValidationError("apply_mask: mask dimensions do not match image");
    Image out = image;
    const auto& m = masks.region(mask_index);
    const int c = image.channels;
    for (std::size_t p = 0; p < m.size(); ++p)
        for (int ch = 0; ch < c; ++ch) out.data[p * c + ch] *= m[p];
    return out;
}

Image blend_regions(const std::vector<Image>& region_images, const MaskTensor& masks) {
    if (static_cast<int>(region_images.size()) != masks.size())
        throw ValidationError("blend_regions: expected " + std::to_string(masks.size()) + " region images, got " +
                              std::to_string(region_images.size()));
    const Image& first = region_images.front();
    if (first.width != masks.width() || first.height != masks.height())
        throw ValidationError("blend_regions: mask dimensions do not match images");
    bool all_equal = true;
    for (const auto& img : region_images) {
        require_same_shape(first, img, "blend_regions");
        all_equal = all_equal && img.data == first.data;
    }
    if (all_equal) return first;

    Image out(first.width, first.height, first.channels, 0.0);
    const int c = first.channels;
    const std::size_t n = first.pixel_count();
    for (int i = 0; i < masks.size(); ++i) {
        const auto& m = masks.region(i);
        const auto& src = region_images[i].data;
        for (std::size_t p = 0; p < n; ++p)
            for (int ch = 0; ch < c; ++ch) out.data[p * c + ch] += m[p] * src[p * c + ch];
    }
    return out;
}

}  // namespace magdr

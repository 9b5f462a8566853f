#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace magdr {

// H x W x C raster, interleaved row-major: index = (y * width + x) * channels + ch.
// Values are nominally in [0,1]; intermediate results (gradients, differences)
// reuse the type without the range check, see in_unit_range().
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0);

    std::size_t size() const { return data.size(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool empty() const { return data.empty(); }

    double& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * width + x) * channels + ch]; }
    double at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + ch]; }

    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
    bool operator==(const Image& other) const = default;
};

void require_same_shape(const Image& a, const Image& b, const char* what);
bool in_unit_range(const Image& img);
Image clamp01(Image img);

// Soft region maps. Construction enforces per-pixel convexity (sum over regions
// equals 1 within 1e-6), a valid target index and positive soft mass per region.
class MaskTensor {
public:
    static constexpr double kConvexityTolerance = 1e-6;

    MaskTensor(int width, int height, std::vector<std::vector<double>> regions,
               std::vector<std::string> names, int target_index);

    // Divides every pixel column by its sum. Throws if some pixel has zero total
    // weight. max_deviation receives max |sum - 1| before renormalization.
    static MaskTensor renormalized(int width, int height, std::vector<std::vector<double>> regions,
                                   std::vector<std::string> names, int target_index,
                                   double* max_deviation = nullptr);

    int width() const { return width_; }
    int height() const { return height_; }
    int size() const { return static_cast<int>(regions_.size()); }
    int target_index() const { return target_; }
    const std::vector<double>& region(int i) const { return regions_.at(i); }
    const std::string& name(int i) const { return names_.at(i); }
    const std::vector<std::string>& names() const { return names_; }
    double mass(int i) const { return mass_.at(i); }
    double at(int i, int y, int x) const { return regions_[i][static_cast<std::size_t>(y) * width_ + x]; }

    MaskTensor with_target(int target_index) const;
    bool operator==(const MaskTensor& other) const = default;

private:
    int width_;
    int height_;
    std::vector<std::vector<double>> regions_;
    std::vector<std::string> names_;
    int target_;
    std::vector<double> mass_;
};

// Pixel-wise product with region i, broadcast across channels.
Image apply_mask(const Image& image, int mask_index, const MaskTensor& masks);

// Σ_i M_i · region_images[i]. If all region images are identical the common
// image is returned unchanged.
Image blend_regions(const std::vector<Image>& region_images, const MaskTensor& masks);

}  // namespace magdr

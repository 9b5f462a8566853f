#pragma once

#include <utility>
#include <vector>

#include "magdr/image.hpp"

namespace magdr {

// Sparse 1-D linear map applied along one image axis. Row i lists the
// (input index, weight) taps that produce output sample i.
struct Lin1D {
    int n_in = 0;
    std::vector<std::vector<std::pair<int, double>>> rows;

    int n_out() const { return static_cast<int>(rows.size()); }
    static Lin1D identity(int n);
};

// Centered odd-length kernel with replicate borders.
Lin1D stencil(int n, const std::vector<double>& kernel);
// Normalized Gaussian; radius < 0 means ceil(3 sigma).
Lin1D gaussian_stencil(int n, double sigma, int radius = -1);
std::vector<double> gaussian_kernel(double sigma, int radius = -1);
Lin1D box_stencil(int n, int k);
// Half-pixel-centered linear interpolation (no antialiasing), edge clamped.
Lin1D bilinear(int n_in, int n_out);

Image apply_x(const Lin1D& op, const Image& in);
Image apply_y(const Lin1D& op, const Image& in);
Image adjoint_x(const Lin1D& op, const Image& in);
Image adjoint_y(const Lin1D& op, const Image& in);

}  // namespace magdr

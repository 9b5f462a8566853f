#include "linear.hpp"

#include <algorithm>
#include <cmath>

#include "magdr/error.hpp"

namespace magdr {

Lin1D Lin1D::identity(int n) {
    Lin1D op;
    op.n_in = n;
    op.rows.resize(n);
    for (int i = 0; i < n; ++i) op.rows[i] = {{i, 1.0}};
    return op;
}

Lin1D stencil(int n, const std::vector<double>& kernel) {
    if (kernel.size() % 2 == 0) throw ValidationError("stencil kernel length must be odd");
    const int r = static_cast<int>(kernel.size()) / 2;
    Lin1D op;
    op.n_in = n;
    op.rows.resize(n);
    for (int i = 0; i < n; ++i) {
        auto& row = op.rows[i];
        for (int k = -r; k <= r; ++k) {
            const int j = std::clamp(i + k, 0, n - 1);
            const double w = kernel[k + r];
            auto it = std::find_if(row.begin(), row.end(), [j](const auto& t) { return t.first == j; });
            if (it == row.end()) row.emplace_back(j, w);
            else it->second += w;
        }
    }
    return op;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    if (!(sigma > 0)) throw ValidationError("gaussian sigma must be positive");
    const int r = radius < 0 ? static_cast<int>(std::ceil(3.0 * sigma)) : radius;
    std::vector<double> k(2 * r + 1);
    double s = 0.0;
    for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= s;
    return k;
}

Lin1D gaussian_stencil(int n, double sigma, int radius) {
    return stencil(n, gaussian_kernel(sigma, radius));
}

Lin1D box_stencil(int n, int k) {
    if (k < 1 || k % 2 == 0) throw ValidationError("box size must be odd and positive");
    return stencil(n, std::vector<double>(k, 1.0 / k));
}

Lin1D bilinear(int n_in, int n_out) {
    Lin1D op;
    op.n_in = n_in;
    op.rows.resize(n_out);
    const double scale = static_cast<double>(n_in) / n_out;
    for (int i = 0; i < n_out; ++i) {
        const double src = std::max(0.0, (i + 0.5) * scale - 0.5);
        const int i0 = std::min(static_cast<int>(std::floor(src)), n_in - 1);
        const int i1 = std::min(i0 + 1, n_in - 1);
        const double t = src - i0;
        if (i1 == i0 || t == 0.0) op.rows[i] = {{i0, 1.0}};
        else op.rows[i] = {{i0, 1.0 - t}, {i1, t}};
    }
    return op;
}

Image apply_x(const Lin1D& op, const Image& in) {
    if (op.n_in != in.width) throw ValidationError("apply_x: operator/image width mismatch");
    Image out(op.n_out(), in.height, in.channels, 0.0);
    const int c = in.channels;
    for (int y = 0; y < in.height; ++y)
        for (int i = 0; i < op.n_out(); ++i) {
            double* o = &out.data[(static_cast<std::size_t>(y) * out.width + i) * c];
            for (const auto& [j, w] : op.rows[i]) {
                const double* s = &in.data[(static_cast<std::size_t>(y) * in.width + j) * c];
                for (int ch = 0; ch < c; ++ch) o[ch] += w * s[ch];
            }
        }
    return out;
}

Image apply_y(const Lin1D& op, const Image& in) {
    if (op.n_in != in.height) throw ValidationError("apply_y: operator/image height mismatch");
    Image out(in.width, op.n_out(), in.channels, 0.0);
    const std::size_t stride = static_cast<std::size_t>(in.width) * in.channels;
    for (int i = 0; i < op.n_out(); ++i) {
        double* o = &out.data[i * stride];
        for (const auto& [j, w] : op.rows[i]) {
            const double* s = &in.data[j * stride];
            for (std::size_t k = 0; k < stride; ++k) o[k] += w * s[k];
        }
    }
    return out;
}

Image adjoint_x(const Lin1D& op, const Image& in) {
    if (op.n_out() != in.width) throw ValidationError("adjoint_x: operator/image width mismatch");
    Image out(op.n_in, in.height, in.channels, 0.0);
    const int c = in.channels;
    for (int y = 0; y < in.height; ++y)
        for (int i = 0; i < op.n_out(); ++i) {
            const double* s = &in.data[(static_cast<std::size_t>(y) * in.width + i) * c];
            for (const auto& [j, w] : op.rows[i]) {
                double* o = &out.data[(static_cast<std::size_t>(y) * out.width + j) * c];
                for (int ch = 0; ch < c; ++ch) o[ch] += w * s[ch];
            }
        }
    return out;
}

Image adjoint_y(const Lin1D& op, const Image& in) {
    if (op.n_out() != in.height) throw ValidationError("adjoint_y: operator/image height mismatch");
    Image out(in.width, op.n_in, in.channels, 0.0);
    const std::size_t stride = static_cast<std::size_t>(in.width) * in.channels;
    for (int i = 0; i < op.n_out(); ++i) {
        const double* s = &in.data[i * stride];
        for (const auto& [j, w] : op.rows[i]) {
            double* o = &out.data[j * stride];
            for (std::size_t k = 0; k < stride; ++k) o[k] += w * s[k];
        }
    }
    return out;
}

}  // namespace magdr

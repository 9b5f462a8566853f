#include "magdr/generator.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <unistd.h>

#include "linear.hpp"
#include "magdr/error.hpp"
#include "magdr/io.hpp"

namespace magdr {

Image Generator::vjp(const Image&, const Condition&, const Image&) const {
    throw ValidationError("generator '" + name() + "' does not expose gradients");
}

void validate_condition(const Condition& c, const MaskTensor& masks) {
    if (c.attribute_index < 0 || c.attribute_index >= masks.size())
        throw ValidationError("condition attribute_index " + std::to_string(c.attribute_index) + " out of range");
    if (!std::isfinite(c.hue_shift_deg) || !std::isfinite(c.brightness) || !std::isfinite(c.contrast))
        throw ValidationError("condition parameters must be finite");
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Rotation about the gray axis (1,1,1)/sqrt(3).
std::array<double, 9> hue_matrix(double deg) {
    const double th = deg * std::numbers::pi / 180.0;
    const double c = std::cos(th), s = std::sin(th), k = (1.0 - c) / 3.0, r = s / std::sqrt(3.0);
    return {c + k, k - r, k + r, k + r, c + k, k - r, k - r, k + r, c + k};
}

const std::vector<double> kSecondDiff = {0.25, -0.5, 0.25};

}  // namespace

ToyEditGenerator::ToyEditGenerator(MaskTensor masks, ToyParams params) : masks_(std::move(masks)), params_(params) {
    if (!(params_.gain > 0)) throw ValidationError("toy generator: gain must be positive");
    if (params_.mix < 0 || params_.mix > 1) throw ValidationError("toy generator: mix must lie in [0,1]");
    if (!std::isfinite(params_.detail)) throw ValidationError("toy generator: detail must be finite");
    lo_ = sigmoid(-params_.gain / 2);
    hi_ = sigmoid(params_.gain / 2);
}

double ToyEditGenerator::s(double t) const { return (sigmoid(params_.gain * (t - 0.5)) - lo_) / (hi_ - lo_); }

double ToyEditGenerator::s_prime(double t) const {
    const double q = sigmoid(params_.gain * (t - 0.5));
    return params_.gain * q * (1.0 - q) / (hi_ - lo_);
}

namespace {

struct ToyShape {
    Lin1D dx, dy;
};

Image detail_op(const Image& x, const ToyShape& ops) { return apply_y(ops.dy, apply_x(ops.dx, x)); }
Image detail_adjoint(const Image& u, const ToyShape& ops) { return adjoint_x(ops.dx, adjoint_y(ops.dy, u)); }

}  // namespace

Image ToyEditGenerator::forward(const Image& x, const Condition& c) const {
    if (x.width != masks_.width() || x.height != masks_.height())
        throw ValidationError("toy generator: image does not match mask dimensions");
    validate_condition(c, masks_);
    const ToyShape ops{stencil(x.width, kSecondDiff), stencil(x.height, kSecondDiff)};
    Image t = x;
    if (params_.detail != 0.0 || !params_.residual) {
        const Image d = params_.detail != 0.0 ? detail_op(x, ops) : Image(x.width, x.height, x.channels, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double h = x.data[i] + params_.detail * d.data[i];
            t.data[i] = params_.residual ? x.data[i] + s(h) - s(x.data[i]) : s(h);
        }
    }
    const auto R = hue_matrix(c.hue_shift_deg);
    const auto& m = masks_.region(c.attribute_index);
    const int C = x.channels;
    Image y(x.width, x.height, C);
    for (std::size_t p = 0; p < x.pixel_count(); ++p) {
        const double a = params_.mix * m[p];
        const double* tp = &t.data[p * C];
        for (int ch = 0; ch < C; ++ch) {
            const double rt = C == 3 ? R[ch * 3] * tp[0] + R[ch * 3 + 1] * tp[1] + R[ch * 3 + 2] * tp[2] : tp[ch];
            const double e = 0.5 + c.contrast * (rt - 0.5) + c.brightness;
            y.data[p * C + ch] = std::clamp((1.0 - a) * tp[ch] + a * e, 0.0, 1.0);
        }
    }
    return y;
}

Image ToyEditGenerator::vjp(const Image& x, const Condition& c, const Image& u) const {
    if (x.width != masks_.width() || x.height != masks_.height())
        throw ValidationError("toy generator: image does not match mask dimensions");
    require_same_shape(x, u, "toy generator vjp");
    validate_condition(c, masks_);
    const ToyShape ops{stencil(x.width, kSecondDiff), stencil(x.height, kSecondDiff)};
    const bool plain = params_.detail == 0.0 && params_.residual;
    Image h = x, t = x;
    if (!plain) {
        const Image d = params_.detail != 0.0 ? detail_op(x, ops) : Image(x.width, x.height, x.channels, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            h.data[i] = x.data[i] + params_.detail * d.data[i];
            t.data[i] = params_.residual ? x.data[i] + s(h.data[i]) - s(x.data[i]) : s(h.data[i]);
        }
    }
    const auto R = hue_matrix(c.hue_shift_deg);
    const auto& m = masks_.region(c.attribute_index);
    const int C = x.channels;
    Image gt(x.width, x.height, C, 0.0);
    for (std::size_t p = 0; p < x.pixel_count(); ++p) {
        const double a = params_.mix * m[p];
        const double* tp = &t.data[p * C];
        double gz[3] = {0, 0, 0};
        for (int ch = 0; ch < C; ++ch) {
            const double rt = C == 3 ? R[ch * 3] * tp[0] + R[ch * 3 + 1] * tp[1] + R[ch * 3 + 2] * tp[2] : tp[ch];
            const double e = 0.5 + c.contrast * (rt - 0.5) + c.brightness;
            const double z = (1.0 - a) * tp[ch] + a * e;
            gz[ch] = (z <= 0.0 || z >= 1.0) ? 0.0 : u.data[p * C + ch];
        }
        for (int j = 0; j < C; ++j) {
            double g = (1.0 - a) * gz[j];
            if (C == 3) g += a * c.contrast * (R[j] * gz[0] + R[3 + j] * gz[1] + R[6 + j] * gz[2]);
            else g += a * c.contrast * gz[j];
            gt.data[p * C + j] = g;
        }
    }
    if (plain) return gt;
    // t = x + s(h) - s(x)  or  t = s(h);  h = x + beta D x
    Image gh(x.width, x.height, C);
    Image gx(x.width, x.height, C);
    for (std::size_t i = 0; i < x.size(); ++i) {
        gh.data[i] = s_prime(h.data[i]) * gt.data[i];
        gx.data[i] = params_.residual ? gt.data[i] - s_prime(x.data[i]) * gt.data[i] : 0.0;
        gx.data[i] += gh.data[i];
    }
    if (params_.detail != 0.0) {
        const Image dg = detail_adjoint(gh, ops);
        for (std::size_t i = 0; i < x.size(); ++i) gx.data[i] += params_.detail * dg.data[i];
    }
    return gx;
}

ExternalProcessGenerator::ExternalProcessGenerator(std::string command, std::filesystem::path work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {
    if (command_.empty()) throw ValidationError("external generator: empty command");
    std::filesystem::create_directories(work_dir_);
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'') out += "'\\''";
        else out += ch;
    }
    return out + "'";
}

}  // namespace

Image ExternalProcessGenerator::forward(const Image& x, const Condition& c) const {
    static std::atomic<unsigned long> counter{0};
    const std::string tag = std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1));
    const auto in = work_dir_ / ("request_" + tag + ".png");
    const auto cond = work_dir_ / ("request_" + tag + ".json");
    const auto out = work_dir_ / ("response_" + tag + ".png");
    save_image(x, in);
    {
        nlohmann::json j = {{"attribute_index", c.attribute_index},
                            {"hue_shift_deg", c.hue_shift_deg},
                            {"brightness", c.brightness},
                            {"contrast", c.contrast}};
        std::ofstream f(cond);
        f << j.dump() << "\n";
    }
    const std::string cmd = command_ + " " + shell_quote(in.string()) + " " + shell_quote(cond.string()) + " " +
                            shell_quote(out.string());
    const int rc = std::system(cmd.c_str());
    if (rc != 0) throw RuntimeError("external generator failed (status " + std::to_string(rc) + "): " + cmd);
    Image y = load_image(out);
    std::filesystem::remove(in);
    std::filesystem::remove(cond);
    std::filesystem::remove(out);
    if (!y.same_shape(x)) throw RuntimeError("external generator returned an image of different shape");
    return y;
}

}  // namespace magdr

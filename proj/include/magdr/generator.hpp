#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "magdr/image.hpp"

namespace magdr {

struct Condition {
    int attribute_index = 2;
    double hue_shift_deg = 20.0;
    double brightness = 0.05;
    double contrast = 1.1;
};

// G(x, c). forward must be deterministic; vjp returns J^T u at x.
class Generator {
public:
    virtual ~Generator() = default;
    virtual Image forward(const Image& x, const Condition& c) const = 0;
    virtual Image vjp(const Image& x, const Condition& c, const Image& u) const;
    virtual bool has_vjp() const { return false; }
    virtual std::string name() const = 0;
};

struct ToyParams {
    double gain = 8.0;    // contrast-sigmoid gain g
    double mix = 1.0;     // edit blend weight
    double detail = 3.0;  // beta of the detail stage h = x + beta * D(x)
    bool residual = true; // t = x + s(h) - s(x) instead of t = s(h)
};

// Toy edit model:
//   h = x + beta * D(x)         D = separable second differences [1,-2,1]/4 per axis
//   t = x + s(h) - s(x)         (residual) or t = s(h)
//   e = 0.5 + contrast * (R_hue t - 0.5) + brightness
//   y = clamp((1 - mix M_c) t + mix M_c e, 0, 1)
// with s(t) = (sigmoid(g (t - 0.5)) - sigmoid(-g/2)) / (sigmoid(g/2) - sigmoid(-g/2)).
// With detail = 0 and residual = false this is y = blend(s(x), edit(s(x)), M_c).
class ToyEditGenerator : public Generator {
public:
    ToyEditGenerator(MaskTensor masks, ToyParams params = {});

    Image forward(const Image& x, const Condition& c) const override;
    Image vjp(const Image& x, const Condition& c, const Image& u) const override;
    bool has_vjp() const override { return true; }
    std::string name() const override { return "toy"; }

    const ToyParams& params() const { return params_; }
    const MaskTensor& masks() const { return masks_; }
    double s(double t) const;
    double s_prime(double t) const;

private:
    MaskTensor masks_;
    ToyParams params_;
    double lo_, hi_;
};

// Third-party model behind a file protocol: runs
//   <command> <input.png> <condition.json> <output.png>
// and reads the output PNG. No gradients.
class ExternalProcessGenerator : public Generator {
public:
    ExternalProcessGenerator(std::string command, std::filesystem::path work_dir);
    Image forward(const Image& x, const Condition& c) const override;
    std::string name() const override { return "external"; }

private:
    std::string command_;
    std::filesystem::path work_dir_;
};

void validate_condition(const Condition& c, const MaskTensor& masks);

}  // namespace magdr

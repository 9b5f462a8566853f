#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "magdr/generator.hpp"
#include "magdr/transforms.hpp"

namespace magdr {

enum class AttackMethod { Pgd, Targeted, Cw, Adaptive };
std::string attack_method_name(AttackMethod m);
AttackMethod parse_attack_method(const std::string& name);

struct AttackConfig {
    AttackMethod method = AttackMethod::Pgd;
    double eps = 0.05;
    double alpha = -1.0;  // < 0 means eps / 10
    int iterations = 40;
    std::string loss = "mse";
    bool random_start = true;  // uniform start in the eps-ball; false starts at delta = 0
    double kappa = 0.1;        // proximity penalty of the C&W variant
    std::optional<Image> target;
    std::vector<TransformSpec> defense_specs;
    std::uint64_t seed = 0;

    double step() const { return alpha < 0 ? eps / 10.0 : alpha; }
    void validate() const;
};

struct AttackResult {
    Image x_hat;
    Image delta;
    std::vector<double> loss_trace;  // objective at the start and after every iteration
    double output_mse = 0.0;         // MSE(G(x_hat), r)
    double linf = 0.0;
};

// Untargeted: ascend L(G(x + delta), G(x)).
AttackResult pgd_disrupt(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg);
// Targeted: descend L(G(x + delta), r_t).
AttackResult pgd_targeted(const Image& x, const Condition& c, const Image& r_t, const Generator& gen,
                          const AttackConfig& cfg);
// x_hat = clamp(x + eps tanh(v)); sign-gradient ascent on v of
// L(G(x_hat), r) - kappa * mean((x_hat - x)^2).
AttackResult cw_disrupt(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg);
// Ascend Σ_k L(G(f_k(x + delta)), r) with surrogate adjoints through f_k.
AttackResult adaptive_attack(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg);

// Dispatch on cfg.method.
AttackResult run_attack(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg);

// Uniform noise in [-eps, eps] (clamped to [0,1]), for baselines.
Image uniform_noise_perturbation(const Image& x, double eps, std::uint64_t seed);

}  // namespace magdr

#include "magdr/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "magdr/error.hpp"
#include "magdr/metrics.hpp"
#include "magdr/rng.hpp"

namespace magdr {

std::string attack_method_name(AttackMethod m) {
    switch (m) {
        case AttackMethod::Pgd: return "pgd";
        case AttackMethod::Targeted: return "targeted";
        case AttackMethod::Cw: return "cw";
        case AttackMethod::Adaptive: return "adaptive";
    }
    return "?";
}

AttackMethod parse_attack_method(const std::string& name) {
    if (name == "pgd") return AttackMethod::Pgd;
    if (name == "targeted") return AttackMethod::Targeted;
    if (name == "cw") return AttackMethod::Cw;
    if (name == "adaptive") return AttackMethod::Adaptive;
    throw ValidationError("unknown attack method '" + name + "' (pgd, targeted, cw, adaptive)");
}

void AttackConfig::validate() const {
    if (!(eps >= 0) || eps > 0.25) throw ValidationError("attack: eps must lie in [0, 0.25]");
    const double a = step();
    if (eps > 0 && !(a > 0 && a <= eps)) throw ValidationError("attack: alpha must satisfy 0 < alpha <= eps");
    if (iterations < 1) throw ValidationError("attack: iterations must be >= 1");
    if (loss != "mse") throw ValidationError("attack: unsupported loss '" + loss + "' (supported: mse)");
    if (!(kappa >= 0)) throw ValidationError("attack: kappa must be non-negative");
    if (method == AttackMethod::Adaptive && defense_specs.empty())
        throw ValidationError("adaptive attack needs a non-empty defense set");
    if (method == AttackMethod::Targeted && !target) throw ValidationError("targeted attack needs a target image");
}

namespace {

double loss_value(const Image& y, const Image& r) { return mse(y, r); }

Image loss_grad(const Image& y, const Image& r) {
    Image g(y.width, y.height, y.channels);
    const double k = 2.0 / static_cast<double>(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) g.data[i] = k * (y.data[i] - r.data[i]);
    return g;
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

Image initial_delta(const Image& x, const AttackConfig& cfg) {
    Image d(x.width, x.height, x.channels, 0.0);
    if (cfg.random_start && cfg.eps > 0) {
        Rng rng(derive_seed(cfg.seed, 0xA77AC4));
        for (double& v : d.data) v = rng.uniform(-cfg.eps, cfg.eps);
    }
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] = std::clamp(x.data[i] + d.data[i], 0.0, 1.0) - x.data[i];
    return d;
}

Image add(const Image& x, const Image& d) {
    Image out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::clamp(x.data[i] + d.data[i], 0.0, 1.0);
    return out;
}

void finish(AttackResult& res, const Image& x, const Image& delta, const Image& r, const Condition& c,
            const Generator& gen) {
    res.x_hat = add(x, delta);
    res.delta = res.x_hat;
    res.linf = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        res.delta.data[i] = res.x_hat.data[i] - x.data[i];
        res.linf = std::max(res.linf, std::abs(res.delta.data[i]));
    }
    res.output_mse = mse(gen.forward(res.x_hat, c), r);
}

// Shared sign-gradient loop. objective(xh, &grad) returns the objective and
// its gradient w.r.t. xh; direction +1 ascends, -1 descends.
template <typename Objective>
AttackResult signed_pgd(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg,
                        const Image& r, double direction, Objective objective) {
    AttackResult res;
    Image delta = initial_delta(x, cfg);
    const double a = cfg.step();
    Image grad;
    res.loss_trace.push_back(objective(add(x, delta), nullptr));
    for (int it = 0; it < cfg.iterations; ++it) {
        const Image xh = add(x, delta);
        objective(xh, &grad);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double d = std::clamp(delta.data[i] + direction * a * sgn(grad.data[i]), -cfg.eps, cfg.eps);
            delta.data[i] = std::clamp(x.data[i] + d, 0.0, 1.0) - x.data[i];
        }
        res.loss_trace.push_back(objective(add(x, delta), nullptr));
    }
    finish(res, x, delta, r, c, gen);
    return res;
}

void require_gradients(const Generator& gen) {
    if (!gen.has_vjp())
        throw ValidationError("generator '" + gen.name() + "' exposes no gradients; gradient attacks unavailable");
}

}  // namespace

AttackResult pgd_disrupt(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg) {
    cfg.validate();
    require_gradients(gen);
    const Image r = gen.forward(x, c);
    return signed_pgd(x, c, gen, cfg, r, +1.0, [&](const Image& xh, Image* grad) {
        const Image y = gen.forward(xh, c);
        if (grad) *grad = gen.vjp(xh, c, loss_grad(y, r));
        return loss_value(y, r);
    });
}

AttackResult pgd_targeted(const Image& x, const Condition& c, const Image& r_t, const Generator& gen,
                          const AttackConfig& cfg) {
    AttackConfig local = cfg;
    local.method = AttackMethod::Targeted;
    local.target = r_t;
    local.validate();
    require_gradients(gen);
    const Image probe = gen.forward(x, c);
    require_same_shape(probe, r_t, "pgd_targeted target");
    AttackResult res = signed_pgd(x, c, gen, local, r_t, -1.0, [&](const Image& xh, Image* grad) {
        const Image y = gen.forward(xh, c);
        if (grad) *grad = gen.vjp(xh, c, loss_grad(y, r_t));
        return loss_value(y, r_t);
    });
    return res;
}

AttackResult adaptive_attack(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg) {
    AttackConfig local = cfg;
    local.method = AttackMethod::Adaptive;
    local.validate();
    require_gradients(gen);
    const Image r = gen.forward(x, c);
    return signed_pgd(x, c, gen, local, r, +1.0, [&](const Image& xh, Image* grad) {
        double total = 0.0;
        if (grad) *grad = Image(xh.width, xh.height, xh.channels, 0.0);
        for (const auto& spec : local.defense_specs) {
            const Image fx = apply(spec, xh);
            const Image y = gen.forward(fx, c);
            total += loss_value(y, r);
            if (grad) {
                const Image g = smooth_vjp(spec, xh, gen.vjp(fx, c, loss_grad(y, r)));
                for (std::size_t i = 0; i < g.size(); ++i) grad->data[i] += g.data[i];
            }
        }
        return total;
    });
}

AttackResult cw_disrupt(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg) {
    cfg.validate();
    require_gradients(gen);
    const Image r = gen.forward(x, c);
    AttackResult res;
    if (cfg.eps == 0.0) {
        res.loss_trace.assign(cfg.iterations + 1, 0.0);
        finish(res, x, Image(x.width, x.height, x.channels, 0.0), r, c, gen);
        return res;
    }
    const Image d0 = initial_delta(x, cfg);
    Image v(x.width, x.height, x.channels);
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = std::atanh(std::clamp(d0.data[i] / cfg.eps, -0.999, 0.999));
    const double n = static_cast<double>(x.size());
    const double step = cfg.step() / cfg.eps;  // near v = 0 one step moves delta by about alpha

    auto delta_of = [&](const Image& vv) {
        Image d = vv;
        for (std::size_t i = 0; i < d.size(); ++i) d.data[i] = cfg.eps * std::tanh(vv.data[i]);
        return d;
    };
    auto objective = [&](const Image& vv, Image* grad) {
        const Image d = delta_of(vv);
        const Image xh = add(x, d);
        const Image y = gen.forward(xh, c);
        double pen = 0.0;
        for (std::size_t i = 0; i < xh.size(); ++i) pen += (xh.data[i] - x.data[i]) * (xh.data[i] - x.data[i]);
        pen /= n;
        if (grad) {
            const Image gx = gen.vjp(xh, c, loss_grad(y, r));
            *grad = vv;
            for (std::size_t i = 0; i < vv.size(); ++i) {
                const double raw = x.data[i] + d.data[i];
                const double pass = (raw < 0.0 || raw > 1.0) ? 0.0 : 1.0;  // clamp stops the gradient
                const double gxh = gx.data[i] - cfg.kappa * 2.0 * (xh.data[i] - x.data[i]) / n;
                const double th = std::tanh(vv.data[i]);
                grad->data[i] = pass * gxh * cfg.eps * (1.0 - th * th);
            }
        }
        return loss_value(y, r) - cfg.kappa * pen;
    };
    Image grad;
    res.loss_trace.push_back(objective(v, nullptr));
    for (int it = 0; it < cfg.iterations; ++it) {
        objective(v, &grad);
        for (std::size_t i = 0; i < v.size(); ++i) v.data[i] += step * sgn(grad.data[i]);
        res.loss_trace.push_back(objective(v, nullptr));
    }
    finish(res, x, delta_of(v), r, c, gen);
    return res;
}

AttackResult run_attack(const Image& x, const Condition& c, const Generator& gen, const AttackConfig& cfg) {
    switch (cfg.method) {
        case AttackMethod::Pgd: return pgd_disrupt(x, c, gen, cfg);
        case AttackMethod::Targeted:
            if (!cfg.target) throw ValidationError("targeted attack needs a target image");
            return pgd_targeted(x, c, *cfg.target, gen, cfg);
        case AttackMethod::Cw: return cw_disrupt(x, c, gen, cfg);
        case AttackMethod::Adaptive: return adaptive_attack(x, c, gen, cfg);
    }
    throw ValidationError("unknown attack method");
}

Image uniform_noise_perturbation(const Image& x, double eps, std::uint64_t seed) {
    Rng rng(seed);
    Image out = x;
    for (double& v : out.data) v = std::clamp(v + rng.uniform(-eps, eps), 0.0, 1.0);
    return out;
}

}  // namespace magdr

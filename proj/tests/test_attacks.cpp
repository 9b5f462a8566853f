#include <doctest.h>

#include <algorithm>

#include "magdr/attacks.hpp"
#include "magdr/error.hpp"
#include "magdr/fixture.hpp"
#include "magdr/metrics.hpp"
#include "oracles.hpp"

using namespace magdr;

namespace {

struct Setup {
    Fixture f;
    ToyEditGenerator gen;
    Condition c;
};

Setup setup(std::uint64_t seed, int size = 32) {
    FixtureSpec spec;
    spec.seed = seed;
    spec.size = size;
    Fixture f = synth_fixture(spec);
    ToyEditGenerator gen(f.masks);
    return {f, gen, {}};
}

AttackConfig config(AttackMethod m, double eps = 0.05, int iters = 10) {
    AttackConfig a;
    a.method = m;
    a.eps = eps;
    a.iterations = iters;
    a.seed = 3;
    a.defense_specs = mildest_specs();
    return a;
}

void check_budget(const Image& x, const AttackResult& r, double eps) {
    CHECK(r.linf <= eps + 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        worst = std::max(worst, std::abs(r.x_hat.data[i] - x.data[i]));
        CHECK(r.x_hat.data[i] >= 0.0);
        CHECK(r.x_hat.data[i] <= 1.0);
    }
    CHECK(worst <= eps + 1e-12);
}

class NoGradGenerator : public Generator {
public:
    Image forward(const Image& x, const Condition&) const override { return x; }
    std::string name() const override { return "nograd"; }
};

}  // namespace

TEST_CASE("method names") {
    for (auto m : {AttackMethod::Pgd, AttackMethod::Targeted, AttackMethod::Cw, AttackMethod::Adaptive})
        CHECK(parse_attack_method(attack_method_name(m)) == m);
    CHECK_THROWS_AS(parse_attack_method("deepfool"), ValidationError);
}

TEST_CASE("eps = 0 returns the input for every method") {
    Setup s = setup(1);
    for (auto m : {AttackMethod::Pgd, AttackMethod::Targeted, AttackMethod::Cw, AttackMethod::Adaptive}) {
        AttackConfig a = config(m, 0.0, 3);
        a.target = s.gen.forward(s.f.image, s.c);
        const AttackResult r = run_attack(s.f.image, s.c, s.gen, a);
        CHECK(r.x_hat == s.f.image);
        CHECK(r.linf == 0.0);
    }
}

TEST_CASE("budget and range") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Setup s = setup(20 + seed);
        for (double eps : {0.01, 0.05, 0.1}) {
            for (auto m : {AttackMethod::Pgd, AttackMethod::Targeted, AttackMethod::Cw, AttackMethod::Adaptive}) {
                AttackConfig a = config(m, eps, 5);
                a.target = Image(32, 32, 3, 0.5);
                check_budget(s.f.image, run_attack(s.f.image, s.c, s.gen, a), eps);
            }
        }
    }
    SUBCASE("pixels near the range boundary") {
        Setup s = setup(2);
        Image x = s.f.image;
        for (std::size_t i = 0; i < x.size(); i += 2) x.data[i] = (i % 4 == 0) ? 0.0 : 1.0;
        check_budget(x, pgd_disrupt(x, s.c, s.gen, config(AttackMethod::Pgd, 0.1, 5)), 0.1);
    }
}

TEST_CASE("untargeted PGD without random start sits at a stationary point") {
    // G(x + 0) = r makes the loss gradient vanish, so every sign step is zero
    Setup s = setup(4);
    AttackConfig a = config(AttackMethod::Pgd, 0.05, 3);
    a.random_start = false;
    const AttackResult r = pgd_disrupt(s.f.image, s.c, s.gen, a);
    CHECK(r.x_hat == s.f.image);
    CHECK(r.loss_trace == std::vector<double>(4, 0.0));
}

TEST_CASE("one targeted step matches a sign-gradient oracle") {
    Setup s = setup(5);
    const Image& x = s.f.image;
    const Image r_t(32, 32, 3, 0.5);
    AttackConfig a = config(AttackMethod::Targeted, 0.05, 1);
    a.alpha = 0.02;
    a.random_start = false;
    const AttackResult r = pgd_targeted(x, s.c, r_t, s.gen, a);
    const Image y = s.gen.forward(x, s.c);
    Image u(x.width, x.height, x.channels);
    for (std::size_t i = 0; i < u.size(); ++i) u.data[i] = 2.0 / u.size() * (y.data[i] - r_t.data[i]);
    const Image g = s.gen.vjp(x, s.c, u);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double step = g.data[i] > 0 ? -0.02 : (g.data[i] < 0 ? 0.02 : 0.0);
        CHECK(r.x_hat.data[i] == doctest::Approx(std::clamp(x.data[i] + step, 0.0, 1.0)).epsilon(1e-15));
    }
    CHECK(r.loss_trace[1] < r.loss_trace[0]);
}

TEST_CASE("PGD objective mostly increases and beats noise") {
    int good = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Setup s = setup(40 + seed);
        const AttackResult r = pgd_disrupt(s.f.image, s.c, s.gen, config(AttackMethod::Pgd, 0.05, 40));
        for (std::size_t i = 1; i < r.loss_trace.size(); ++i, ++total) good += r.loss_trace[i] >= r.loss_trace[i - 1];
        const Image noise = uniform_noise_perturbation(s.f.image, 0.05, seed);
        const double noise_mse = mse(s.gen.forward(noise, s.c), s.gen.forward(s.f.image, s.c));
        CHECK(r.output_mse > noise_mse);
        CHECK(r.output_mse == doctest::Approx(r.loss_trace.back()).epsilon(1e-12));
    }
    CHECK(good >= 0.9 * total);
}

TEST_CASE("targeted attack") {
    Setup s = setup(6);
    SUBCASE("target equal to G(x) without random start stays at x") {
        AttackConfig a = config(AttackMethod::Targeted, 0.05, 5);
        a.random_start = false;
        const Image r_t = s.gen.forward(s.f.image, s.c);
        const AttackResult r = pgd_targeted(s.f.image, s.c, r_t, s.gen, a);
        CHECK(r.x_hat == s.f.image);
        CHECK(r.output_mse == 0.0);
    }
    SUBCASE("distance to the target decreases") {
        FixtureSpec other;
        other.seed = 99;
        other.size = 32;
        const Image r_t = s.gen.forward(synth_fixture(other).image, s.c);
        const AttackResult r = pgd_targeted(s.f.image, s.c, r_t, s.gen, config(AttackMethod::Targeted, 0.05, 20));
        CHECK(r.loss_trace.back() < r.loss_trace.front());
        CHECK(r.output_mse < mse(s.gen.forward(s.f.image, s.c), r_t));
    }
    SUBCASE("target shape mismatch") {
        CHECK_THROWS_AS(pgd_targeted(s.f.image, s.c, Image(8, 8, 3), s.gen, config(AttackMethod::Targeted)),
                        ValidationError);
    }
}

TEST_CASE("C&W variant") {
    Setup s = setup(7);
    const AttackResult pgd = pgd_disrupt(s.f.image, s.c, s.gen, config(AttackMethod::Pgd, 0.05, 40));
    const AttackResult cw = cw_disrupt(s.f.image, s.c, s.gen, config(AttackMethod::Cw, 0.05, 40));
    CHECK(cw.output_mse >= 0.5 * pgd.output_mse);
    CHECK(cw.output_mse <= 2.0 * pgd.output_mse);
    AttackConfig heavy = config(AttackMethod::Cw, 0.05, 40);
    heavy.kappa = 1e6;
    const AttackResult h = cw_disrupt(s.f.image, s.c, s.gen, heavy);
    CHECK(h.output_mse < 0.1 * cw.output_mse);
}

TEST_CASE("adaptive attack") {
    Setup s = setup(8);
    SUBCASE("identity-only defense set reproduces PGD") {
        AttackConfig a = config(AttackMethod::Adaptive, 0.05, 10);
        a.defense_specs = {make_spec(Category::Identity)};
        AttackConfig p = config(AttackMethod::Pgd, 0.05, 10);
        const AttackResult ra = adaptive_attack(s.f.image, s.c, s.gen, a);
        const AttackResult rp = pgd_disrupt(s.f.image, s.c, s.gen, p);
        CHECK(ra.x_hat == rp.x_hat);
        CHECK(ra.loss_trace == rp.loss_trace);
    }
    SUBCASE("empty defense set") {
        AttackConfig a = config(AttackMethod::Adaptive);
        a.defense_specs.clear();
        CHECK_THROWS_AS(adaptive_attack(s.f.image, s.c, s.gen, a), ValidationError);
    }
    SUBCASE("the objective grows") {
        const AttackResult r = adaptive_attack(s.f.image, s.c, s.gen, config(AttackMethod::Adaptive, 0.05, 10));
        CHECK(r.loss_trace.back() > r.loss_trace.front());
    }
}

TEST_CASE("determinism and seeds") {
    Setup s = setup(9);
    for (auto m : {AttackMethod::Pgd, AttackMethod::Cw, AttackMethod::Adaptive}) {
        const AttackConfig a = config(m, 0.05, 5);
        CHECK(run_attack(s.f.image, s.c, s.gen, a).x_hat == run_attack(s.f.image, s.c, s.gen, a).x_hat);
    }
    AttackConfig a = config(AttackMethod::Pgd, 0.05, 5), b = a;
    b.seed = 4;
    CHECK_FALSE(pgd_disrupt(s.f.image, s.c, s.gen, a).x_hat == pgd_disrupt(s.f.image, s.c, s.gen, b).x_hat);
}

TEST_CASE("invalid configurations") {
    Setup s = setup(10);
    auto bad = [&](auto edit) {
        AttackConfig a = config(AttackMethod::Pgd);
        edit(a);
        CHECK_THROWS_AS(run_attack(s.f.image, s.c, s.gen, a), ValidationError);
    };
    bad([](AttackConfig& a) { a.eps = -0.1; });
    bad([](AttackConfig& a) { a.eps = 0.5; });
    bad([](AttackConfig& a) { a.alpha = 0.1; });
    bad([](AttackConfig& a) { a.iterations = 0; });
    bad([](AttackConfig& a) { a.loss = "l1"; });
    bad([](AttackConfig& a) { a.method = AttackMethod::Targeted; });
    NoGradGenerator ng;
    CHECK_THROWS_AS(pgd_disrupt(s.f.image, s.c, ng, config(AttackMethod::Pgd)), ValidationError);
}

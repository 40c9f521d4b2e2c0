#include <catch_amalgamated.hpp>

#include <cmath>

#include "ganlab/dirac.hpp"
#include "ganlab/spectral.hpp"

using namespace ganlab;
using Catch::Approx;

namespace {
const LossFunction logistic = make_loss(LossKind::logistic);
const LossFunction linear = make_loss(LossKind::linear);
const double fp1 = 1.0 / (1.0 + std::exp(1.0)); // f'(1) for the logistic loss
} // namespace

TEST_CASE("gauss_hermite integrates Gaussian moments") {
    GaussHermite gh = gauss_hermite(32);
    CHECK(gh.expect(0.0, 1.0, [](double) { return 1.0; }) == Approx(1.0).epsilon(1e-13));
    CHECK(gh.expect(0.0, 2.0, [](double t) { return t * t; }) == Approx(4.0).epsilon(1e-12));
    CHECK(gh.expect(1.5, 1.0, [](double t) { return t; }) == Approx(1.5).epsilon(1e-12));
    CHECK(gh.expect(0.0, 1.0, [](double t) { return t * t * t * t; }) ==
          Approx(3.0).epsilon(1e-12));
}

TEST_CASE("standard field values") {
    DiracState v = vector_field(MethodSpec::standard(), logistic, {1.0, 1.0});
    CHECK(v.theta == Approx(-fp1).epsilon(1e-9));
    CHECK(v.psi == Approx(fp1).epsilon(1e-9));

    DiracState zero = vector_field(MethodSpec::standard(), logistic, {0.0, 0.0});
    CHECK(zero.theta == 0.0);
    CHECK(zero.psi == 0.0);
}

TEST_CASE("nonsaturating field values") {
    DiracState v = vector_field(MethodSpec::nonsaturating(), logistic, {1.0, 1.0});
    CHECK(v.theta == Approx(-1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-9));
    CHECK(v.psi == Approx(fp1).epsilon(1e-9));
    // cross-check by finite differences of the two objectives
    double h = 1e-6;
    auto gen_obj = [&](double theta) { return logistic.f(-theta * 1.0); }; // maximized
    CHECK(v.theta == Approx((gen_obj(1.0 + h) - gen_obj(1.0 - h)) / (2 * h)).margin(1e-8));
}

TEST_CASE("wgangp field and the sign(0) convention") {
    MethodSpec m = MethodSpec::wgangp(1.0, 1.0);
    DiracState v = vector_field(m, linear, {0.0, 0.5});
    CHECK(v.theta == -0.5);
    CHECK(v.psi == 0.5);
    // on psi = 0 the penalty term vanishes
    DiracState on_axis = vector_field(m, linear, {0.7, 0.0});
    CHECK(on_axis.psi == 0.7);
}

TEST_CASE("gradient penalty field") {
    DiracState v = vector_field(MethodSpec::gradient_penalty(1.0), logistic, {0.0, 1.0});
    CHECK(v.theta == -0.5);
    CHECK(v.psi == -1.0);
}

TEST_CASE("instance-noise field vanishes exactly at the equilibrium") {
    for (double sigma : {0.3, 1.0, 2.0}) {
        for (int order : {8, 16, 32, 64}) {
            DiracState v =
                vector_field(MethodSpec::instance_noise(sigma, order), logistic, {0.0, 0.0});
            CHECK(v.theta == 0.0);
            CHECK(v.psi == 0.0);
        }
    }
}

TEST_CASE("instance-noise field is deterministic given the order") {
    MethodSpec m = MethodSpec::instance_noise(1.0, 32);
    DiracState a = vector_field(m, logistic, {0.4, -0.3});
    DiracState b = vector_field(m, logistic, {0.4, -0.3});
    CHECK(a.theta == b.theta);
    CHECK(a.psi == b.psi);
}

TEST_CASE("consensus field with gamma = 0 equals the standard field exactly") {
    for (double theta : {-1.5, 0.0, 0.7}) {
        for (double psi : {-0.4, 0.2, 2.0}) {
            DiracState a = vector_field(MethodSpec::consensus(0.0), logistic, {theta, psi});
            DiracState b = vector_field(MethodSpec::standard(), logistic, {theta, psi});
            CHECK(a.theta == b.theta);
            CHECK(a.psi == b.psi);
        }
    }
}

TEST_CASE("quadratic and exponential discriminator fields match FD of their objectives") {
    MethodSpec quad = MethodSpec::standard(Discriminator::quadratic);
    DiracState s{0.4, -0.2, 0.8};
    DiracState v = vector_field(quad, logistic, s);
    double h = 1e-6;
    auto lq = [&](double t, double p, double p1) { return logistic.f(p1 * t * t + p * t); };
    CHECK(v.theta ==
          Approx(-(lq(0.4 + h, -0.2, 0.8) - lq(0.4 - h, -0.2, 0.8)) / (2 * h)).margin(1e-8));
    CHECK(v.psi == Approx((lq(0.4, -0.2 + h, 0.8) - lq(0.4, -0.2 - h, 0.8)) / (2 * h)).margin(1e-8));
    CHECK(*v.psi1 ==
          Approx((lq(0.4, -0.2, 0.8 + h) - lq(0.4, -0.2, 0.8 - h)) / (2 * h)).margin(1e-8));

    MethodSpec expo = MethodSpec::standard(Discriminator::exponential);
    DiracState se{0.3, 0.5};
    DiracState ve = vector_field(expo, logistic, se);
    auto le = [&](double t, double p) { return logistic.f(p * std::exp(t)) + logistic.f(-p); };
    CHECK(ve.theta == Approx(-(le(0.3 + h, 0.5) - le(0.3 - h, 0.5)) / (2 * h)).margin(1e-8));
    CHECK(ve.psi == Approx((le(0.3, 0.5 + h) - le(0.3, 0.5 - h)) / (2 * h)).margin(1e-8));
}

TEST_CASE("field configuration errors") {
    CHECK_THROWS_AS(vector_field(MethodSpec::wgan(), logistic, {0.1, 0.1}), config_error);
    CHECK_THROWS_AS(vector_field(MethodSpec::standard(), logistic, {0.1, 0.1, 1.0}), config_error);
    CHECK_THROWS_AS(
        vector_field(MethodSpec::standard(Discriminator::quadratic), logistic, {0.1, 0.1}),
        config_error);
    MethodSpec bad = MethodSpec::gradient_penalty(1.0);
    bad.discriminator = Discriminator::quadratic;
    CHECK_THROWS_AS(vector_field(bad, logistic, {0.1, 0.1, 1.0}), config_error);
}

TEST_CASE("equilibrium Jacobians in closed form") {
    Eigen::MatrixXd std_j = equilibrium_jacobian(MethodSpec::standard(), logistic);
    CHECK(std_j(0, 1) == -0.5);
    CHECK(std_j(1, 0) == 0.5);
    CHECK(std_j(0, 0) == 0.0);

    Eigen::MatrixXd gp = equilibrium_jacobian(MethodSpec::gradient_penalty(1.0), logistic);
    CHECK(gp(1, 1) == -1.0);

    Eigen::MatrixXd in = equilibrium_jacobian(MethodSpec::instance_noise(1.0), logistic);
    CHECK(in(1, 1) == -0.5);

    Eigen::MatrixXd cons = equilibrium_jacobian(MethodSpec::consensus(1.0), logistic);
    CHECK(cons(0, 0) == -0.25);
    CHECK(cons(1, 1) == -0.25);

    Eigen::MatrixXd wg = equilibrium_jacobian(MethodSpec::wgan(), linear);
    CHECK(wg(0, 1) == -1.0);

    CHECK_THROWS_AS(equilibrium_jacobian(MethodSpec::wgangp(1.0), linear), no_equilibrium_error);
}

TEST_CASE("exponential-discriminator spectrum") {
    Eigen::MatrixXd j = equilibrium_jacobian(MethodSpec::standard(Discriminator::exponential), logistic);
    CHECK(j(1, 1) == -0.5);
    Spectrum s = eig2(j);
    for (auto& l : s.eigenvalues) {
        CHECK(l.real() == Approx(-0.25).epsilon(1e-12));
        CHECK(std::abs(l.imag()) == Approx(0.4330127018922193).epsilon(1e-12));
    }
}

TEST_CASE("quadratic-discriminator spectrum: 0 along psi1, -0.5 double") {
    Eigen::MatrixXd j =
        equilibrium_jacobian(MethodSpec::standard(Discriminator::quadratic), logistic, 1.0);
    Spectrum s = eig_small(j);
    CHECK(std::abs(s.eigenvalues[2]) <= 1e-12);
    CHECK(s.eigenvalues[0].real() == Approx(-0.5).margin(1e-9));
    CHECK(s.eigenvalues[1].real() == Approx(-0.5).margin(1e-9));
    CHECK_THROWS_AS(equilibrium_jacobian(MethodSpec::standard(Discriminator::quadratic), logistic),
                    config_error);
}

TEST_CASE("fd_jacobian matches every differentiable equilibrium Jacobian to 1e-5") {
    struct Case {
        MethodSpec method;
        LossFunction loss;
        DiracState at;
    };
    std::vector<Case> cases = {
        {MethodSpec::standard(), logistic, {0, 0}},
        {MethodSpec::nonsaturating(), logistic, {0, 0}},
        {MethodSpec::wgan(), linear, {0, 0}},
        {MethodSpec::gradient_penalty(1.0), logistic, {0, 0}},
        {MethodSpec::instance_noise(1.0), logistic, {0, 0}},
        {MethodSpec::consensus(1.0), logistic, {0, 0}},
        {MethodSpec::standard(Discriminator::exponential), logistic, {0, 0}},
        {MethodSpec::standard(Discriminator::quadratic), logistic, {0, 0, 1.0}},
    };
    for (const auto& c : cases) {
        Eigen::MatrixXd closed = equilibrium_jacobian(c.method, c.loss, c.at.psi1);
        Eigen::MatrixXd fd = fd_jacobian(c.method, c.loss, c.at);
        INFO(method_name(c.method.kind));
        CHECK((closed - fd).cwiseAbs().maxCoeff() <= 1e-5);
    }
}

TEST_CASE("critical parameters") {
    CHECK(gamma_critical(logistic) == 1.0);
    CHECK(sigma_critical(logistic) == Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(sigma_critical(linear), config_error);
}

TEST_CASE("simgd step and the exact norm identity") {
    DiracState next =
        step_discrete({1.0, 0.0}, UpdateRule::simgd(0.1), MethodSpec::standard(), logistic);
    CHECK(next.theta == 1.0);
    CHECK(next.psi == 0.05);
    CHECK(radius(next) == Approx(1.0025).epsilon(1e-15));

    DiracState fixed =
        step_discrete({0.0, 0.0}, UpdateRule::simgd(0.1), MethodSpec::standard(), logistic);
    CHECK(fixed.theta == 0.0);
    CHECK(fixed.psi == 0.0);
}

TEST_CASE("wgan discriminator updates are projected onto the clip region") {
    DiracState next =
        step_discrete({0.0, 0.9}, UpdateRule::simgd(0.5), MethodSpec::wgan(1.0), linear);
    CHECK(next.theta == -0.45);
    CHECK(std::abs(next.psi) <= 1.0);

    // a step that actually lands outside gets clipped
    DiracState clipped =
        step_discrete({0.9, 0.9}, UpdateRule::simgd(0.5), MethodSpec::wgan(1.0), linear);
    CHECK(clipped.psi == 1.0);
}

TEST_CASE("simgd norm recurrence holds to 1e-12 over 10k steps") {
    UpdateRule rule = UpdateRule::simgd(0.1);
    MethodSpec method = MethodSpec::standard();
    DiracState s{1.0, 0.0};
    double h2 = 0.1 * 0.1;
    for (int k = 0; k < 10000; ++k) {
        double d1 = logistic.f1(s.theta * s.psi);
        double predicted = radius(s) * (1.0 + h2 * d1 * d1);
        DiracState next = step_discrete(s, rule, method, logistic);
        REQUIRE(std::abs(radius(next) - predicted) / predicted <= 1e-12);
        REQUIRE(radius(next) > radius(s));
        s = next;
    }
}

TEST_CASE("simulate: radii strictly increase for the standard game") {
    Trajectory t =
        simulate({1.0, 0.0}, UpdateRule::simgd(0.1), MethodSpec::standard(), logistic, 1000);
    REQUIRE(t.states.size() == 1001);
    for (std::size_t i = 1; i < t.radii.size(); ++i) REQUIRE(t.radii[i] > t.radii[i - 1]);
}

TEST_CASE("simulate: gradient penalty at gamma = 1 converges linearly") {
    Trajectory t = simulate({1.0, 0.0}, UpdateRule::simgd(0.5),
                            MethodSpec::gradient_penalty(1.0), logistic, 5000);
    CHECK(t.radii.back() < 1e-6);
}

TEST_CASE("simulate: the equilibrium is a fixed point") {
    Trajectory t =
        simulate({0.0, 0.0}, UpdateRule::altgd(0.2, 2, 3), MethodSpec::standard(), logistic, 10);
    for (double r : t.radii) CHECK(r == 0.0);
    CHECK_THROWS_AS(
        simulate({0.0, 0.0}, UpdateRule::simgd(0.1), MethodSpec::standard(), logistic, 0),
        invalid_input_error);
}

TEST_CASE("simulate: divergence carries the finite prefix") {
    // standard method with the linear loss doubles the radius every step at h = 1
    try {
        simulate({1.0, 1.0}, UpdateRule::simgd(1.0), MethodSpec::standard(), linear, 200);
        FAIL("expected divergence");
    } catch (const divergence_error& e) {
        CHECK(e.prefix.states.size() > 10);
        CHECK(e.prefix.states.size() < 200);
        for (const auto& s : e.prefix.states) CHECK(s.finite());
    }
}

TEST_CASE("rk4 conservation for the standard game") {
    Trajectory t = flow_continuous({1.0, 0.0}, MethodSpec::standard(), logistic, 0.01, 10.0);
    double worst = 0.0;
    for (double r : t.radii) worst = std::max(worst, std::abs(r - 1.0));
    CHECK(worst <= 1e-8);
}

TEST_CASE("rk4 nonsaturating flow has nonincreasing radius") {
    Trajectory t = flow_continuous({1.0, 1.0}, MethodSpec::nonsaturating(), logistic, 0.01, 100.0);
    for (std::size_t i = 1; i < t.radii.size(); ++i) REQUIRE(t.radii[i] <= t.radii[i - 1]);
}

TEST_CASE("rk4 gradient-penalty flow decays") {
    Trajectory t =
        flow_continuous({1.0, 0.0}, MethodSpec::gradient_penalty(1.0), logistic, 0.01, 50.0);
    CHECK(t.radii.back() < 1e-4);
}

TEST_CASE("radius examples") {
    CHECK(radius({1.0, 0.0}) == 1.0);
    CHECK(radius({0.0, 0.0}) == 0.0);
    CHECK(radius({3.0, 4.0}) == 25.0);
    CHECK(radius({1.0, 2.0, 2.0}) == 9.0);
}

TEST_CASE("portrait grid") {
    auto grid = portrait_grid(MethodSpec::standard(), logistic, {-2, 2, -2, 2}, 3);
    REQUIRE(grid.size() == 9);
    CHECK(grid[4].state.theta == 0.0);
    CHECK(grid[4].state.psi == 0.0);
    CHECK(grid[4].velocity.theta == 0.0);
    CHECK(grid[4].velocity.psi == 0.0);

    auto gp = portrait_grid(MethodSpec::gradient_penalty(1.0), logistic, {-2, 2, -2, 2}, 5);
    // the entry whose state is (theta, psi) = (0, 1)
    const PortraitEntry& e = gp[3 * 5 + 2];
    REQUIRE(e.state.theta == 0.0);
    REQUIRE(e.state.psi == 1.0);
    CHECK(e.velocity.theta == -0.5);
    CHECK(e.velocity.psi == -1.0);

    CHECK_THROWS_AS(portrait_grid(MethodSpec::standard(), logistic, {-2, 2, -2, 2}, 1),
                    invalid_input_error);
}

TEST_CASE("altgd linearization matches the closed-form spectrum") {
    double c = 0.5; // f'(0), logistic
    for (auto [h, ng, nd] : {std::tuple{0.2, 1, 1}, {0.5, 2, 1}, {0.1, 3, 5}, {1.0, 2, 2}}) {
        Eigen::Matrix2d a = altgd_linearization(UpdateRule::altgd(h, ng, nd), c);
        Spectrum s = eig2(a);
        double alpha = std::sqrt(double(ng) * nd) * h * c;
        auto [l1, l2] = altgd_eigenvalue_formula(alpha);
        // compare as sets (sorted by real then imag on both sides)
        std::complex<double> f1 = l1, f2 = l2;
        if (f1.real() > f2.real() || (f1.real() == f2.real() && f1.imag() > f2.imag()))
            std::swap(f1, f2);
        CHECK(std::abs(s.eigenvalues[0] - f1) <= 1e-12);
        CHECK(std::abs(s.eigenvalues[1] - f2) <= 1e-12);
        // the product of the eigenvalues is the determinant, which is exactly 1
        std::complex<double> prod = s.eigenvalues[0] * s.eigenvalues[1];
        CHECK(std::abs(prod - 1.0) <= 1e-12);
        if (alpha <= 2.0) {
            CHECK(std::abs(std::abs(s.eigenvalues[0]) - 1.0) <= 1e-12);
            CHECK(std::abs(std::abs(s.eigenvalues[1]) - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("wgangp: step gap tends to h * g0 near the equilibrium, orbit never converges") {
    MethodSpec m = MethodSpec::wgangp(1.0, 1.0);
    UpdateRule rule = UpdateRule::simgd(0.01);

    // |psi_{k+1} - psi_k| -> h g0 along any sequence of states approaching
    // (0, 0); this is what rules out convergence.
    for (double r : {1e-2, 1e-3, 1e-4}) {
        DiracState p{0.6 * r, -0.8 * r};
        DiracState next = step_discrete(p, rule, m, linear);
        CHECK(std::abs(next.psi - p.psi) == Approx(0.01).epsilon(2.0 * r));
    }

    // the simulated orbit stays bounded away from the equilibrium
    Trajectory t = simulate({0.5, 0.5}, rule, m, linear, 10000);
    double min_radius = 1e300;
    for (std::size_t i = 5000; i < t.radii.size(); ++i)
        min_radius = std::min(min_radius, t.radii[i]);
    CHECK(min_radius > 0.5);
}

TEST_CASE("two-timescale rules are accepted and validated") {
    DiracState s =
        step_discrete({1.0, 0.0}, UpdateRule::simgd(0.1, 0.2), MethodSpec::standard(), logistic);
    CHECK(s.psi == 0.1); // discriminator moved with its own rate
    CHECK_THROWS_AS(UpdateRule::simgd(-0.1).validate(), config_error);
    CHECK_THROWS_AS(UpdateRule::altgd(0.1, 0, 1).validate(), config_error);
}

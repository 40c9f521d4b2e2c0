#include <catch_amalgamated.hpp>

#include <cmath>

#include "ganlab/gan2d.hpp"

using namespace ganlab;
using Catch::Approx;

namespace {

TrainConfig tiny_config(Dataset2D data, TrainMethodSpec method, int iterations) {
    TrainConfig cfg;
    cfg.dataset = data;
    cfg.gen_arch = {8, 4, Activation::leaky_relu};
    cfg.disc_arch = {8, 4, Activation::leaky_relu};
    cfg.latent_dim = 4;
    cfg.method = method;
    cfg.optimizer = OptimizerSpec::rmsprop(0.9, 1e-4);
    cfg.batch_size = 16;
    cfg.iterations = iterations;
    cfg.eval_interval = 10;
    cfg.eval_samples = 32;
    cfg.final_window = 20;
    cfg.seed = 3;
    return cfg;
}

} // namespace

TEST_CASE("gaussian sampling: mean concentrates at the center") {
    SampleSet s = sample_data(Dataset2D::gaussian({0, 0}, 1.0, 11), 10000);
    double mx = 0, my = 0;
    for (auto& p : s.points) {
        mx += p[0];
        my += p[1];
    }
    mx /= 10000;
    my /= 10000;
    CHECK(std::abs(mx) < 0.05);
    CHECK(std::abs(my) < 0.05);
}

TEST_CASE("circle sampling: radii are exact") {
    SampleSet s = sample_data(Dataset2D::circle({0.5, -0.25}, 1.0, 7), 5);
    for (auto& p : s.points) {
        double r = std::hypot(p[0] - 0.5, p[1] + 0.25);
        CHECK(std::abs(r - 1.0) <= 1e-12);
    }
}

TEST_CASE("line sampling stays on the segment") {
    SampleSet s = sample_data(Dataset2D::line({0, 0}, {1, 0}, 9), 100);
    for (auto& p : s.points) {
        CHECK(p[1] == 0.0);
        CHECK(p[0] >= 0.0);
        CHECK(p[0] <= 1.0);
    }
}

TEST_CASE("four-lines sampling covers all four segments") {
    Dataset2D d = Dataset2D::four_lines(13);
    SampleSet s = sample_data(d, 400);
    std::array<int, 4> hits{};
    for (auto& p : s.points) {
        for (int k = 0; k < 4; ++k)
            if (p[0] == d.segments[static_cast<std::size_t>(k)].a[0]) ++hits[static_cast<std::size_t>(k)];
    }
    for (int k = 0; k < 4; ++k) CHECK(hits[static_cast<std::size_t>(k)] > 0);
}

TEST_CASE("sampling is deterministic given the seed") {
    Dataset2D d = Dataset2D::gaussian({0, 0}, 1.0, 21);
    SampleSet a = sample_data(d, 64), b = sample_data(d, 64);
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i][0] == b.points[i][0]);
        CHECK(a.points[i][1] == b.points[i][1]);
    }
}

TEST_CASE("penalty: zero discriminator gives zero value and zero gradient") {
    Rng rng(5);
    MlpParams d = MlpParams::create({2, 4, 4, 1}, Activation::tanh, rng);
    zero_output_layer(d);
    std::vector<Point2> batch{{0.1, 0.2}, {-0.3, 0.4}};
    auto [value, grad] = penalty(TrainMethodSpec::Kind::r1, d, batch, {}, 10.0, 1.0);
    CHECK(value == 0.0);
    // gradient components through the zeroed output weights are zero
    std::size_t tail = d.layers.back().W.size() + d.layers.back().b.size();
    for (std::size_t i = grad.size() - tail; i < grad.size(); ++i) CHECK(grad[i] == 0.0);
}

TEST_CASE("penalty: linear discriminator, r1 value and gradient by hand") {
    // D(x) = w^T x + b: grad_x D = w, so R1 = gamma/2 ||w||^2, dR1/dw = gamma w
    MlpParams d;
    d.layers.push_back({2, 1, {0.6, -0.8}, {0.33}});
    std::vector<Point2> batch{{1.0, 2.0}, {-3.0, 0.5}, {0.0, 0.0}};
    auto [value, grad] = penalty(TrainMethodSpec::Kind::r1, d, batch, {}, 2.0, 1.0);
    CHECK(value == Approx(1.0).epsilon(1e-14)); // gamma/2 * ||w||^2 = 1 * 1
    CHECK(grad[0] == Approx(2.0 * 0.6).epsilon(1e-14));
    CHECK(grad[1] == Approx(2.0 * -0.8).epsilon(1e-14));
    CHECK(grad[2] == 0.0); // bias never enters the input gradient
}

TEST_CASE("penalty: wgangp vanishes for a unit-norm linear discriminator") {
    MlpParams d;
    d.layers.push_back({2, 1, {0.6, 0.8}, {0.0}});
    std::vector<Point2> reals{{1.0, 0.0}, {0.0, 1.0}};
    std::vector<Point2> fakes{{0.5, 0.5}, {-1.0, 0.2}};
    Rng rng(1);
    auto [value, grad] = penalty(TrainMethodSpec::Kind::wgangp, d, reals, fakes, 10.0, 1.0, &rng);
    CHECK(value == Approx(0.0).margin(1e-28));
}

TEST_CASE("penalty: r1 ignores the fake batch, r2 ignores the real batch") {
    Rng rng(31);
    MlpParams d = MlpParams::create({2, 6, 6, 1}, Activation::tanh, rng);
    std::vector<Point2> reals{{0.3, -0.1}, {0.7, 0.9}};
    std::vector<Point2> fakes{{-0.5, 0.2}, {1.5, -1.0}};
    std::vector<Point2> other{{9.0, 9.0}, {-9.0, -9.0}};

    auto [v1, g1] = penalty(TrainMethodSpec::Kind::r1, d, reals, fakes, 3.0, 1.0);
    auto [v2, g2] = penalty(TrainMethodSpec::Kind::r1, d, reals, other, 3.0, 1.0);
    CHECK(v1 == v2);
    for (std::size_t i = 0; i < g1.size(); ++i) REQUIRE(g1[i] == g2[i]);

    auto [v3, g3] = penalty(TrainMethodSpec::Kind::r2, d, reals, fakes, 3.0, 1.0);
    auto [v4, g4] = penalty(TrainMethodSpec::Kind::r2, d, other, fakes, 3.0, 1.0);
    CHECK(v3 == v4);
    for (std::size_t i = 0; i < g3.size(); ++i) REQUIRE(g3[i] == g4[i]);
}

TEST_CASE("penalty gradients pass gradcheck") {
    Rng rng(37);
    for (int trial = 0; trial < 5; ++trial) {
        MlpParams d = MlpParams::create({2, 4, 4, 1}, Activation::tanh, rng);
        std::vector<Point2> reals, fakes;
        for (int i = 0; i < 4; ++i) {
            reals.push_back({rng.normal(), rng.normal()});
            fakes.push_back({rng.normal(), rng.normal()});
        }
        for (auto kind : {TrainMethodSpec::Kind::r1, TrainMethodSpec::Kind::r2,
                          TrainMethodSpec::Kind::wgangp}) {
            auto value = [&](const std::vector<double>& flat) {
                MlpParams q = d;
                q.set_flat(flat);
                Rng r2(99);
                return penalty(kind, q, reals, fakes, 3.0, 1.0, &r2).first;
            };
            auto grad = [&](const std::vector<double>& flat) {
                MlpParams q = d;
                q.set_flat(flat);
                Rng r2(99);
                return penalty(kind, q, reals, fakes, 3.0, 1.0, &r2).second;
            };
            double tol = kind == TrainMethodSpec::Kind::wgangp ? 1e-3 : 1e-3;
            CHECK(gradcheck(value, grad, d.flatten(), 1e-4) <= tol);
        }
    }
}

TEST_CASE("training_step: lr = 0 SGD leaves parameters unchanged bitwise") {
    TrainConfig cfg = tiny_config(Dataset2D::gaussian({0, 0}, 1.0, 1),
                                  TrainMethodSpec::r1(10.0), 1);
    cfg.optimizer = OptimizerSpec::sgd(1e-300); // validate() requires lr > 0
    cfg.optimizer.lr = 0.0;                      // exercised directly, not via train()
    TrainState st = init_state(cfg);
    auto g0 = st.gen.flatten();
    auto d0 = st.disc.flatten();
    training_step(st, cfg, 0);
    auto g1 = st.gen.flatten();
    auto d1 = st.disc.flatten();
    for (std::size_t i = 0; i < g0.size(); ++i) REQUIRE(g0[i] == g1[i]);
    for (std::size_t i = 0; i < d0.size(); ++i) REQUIRE(d0[i] == d1[i]);
}

TEST_CASE("training_step: small SGD steps increase the discriminator objective") {
    // ascent property on a frozen batch sequence: repeat the same seeded
    // update twice; the second application from the updated point must see a
    // larger objective than the first for a small enough rate
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TrainConfig cfg = tiny_config(Dataset2D::gaussian({0, 0}, 1.0, seed),
                                      TrainMethodSpec::unregularized(), 1);
        cfg.optimizer = OptimizerSpec::sgd(1e-4);
        cfg.seed = seed;
        TrainState st = init_state(cfg);
        StepStats first = training_step(st, cfg, 0);
        // same iteration index: identical batches, post-update parameters
        StepStats second = training_step(st, cfg, 0);
        if (second.disc_objective > first.disc_objective) ++improved;
    }
    CHECK(improved == 10);
}

TEST_CASE("training_step: r1 with gamma = 0 equals unregularized bitwise") {
    TrainConfig a = tiny_config(Dataset2D::circle({0, 0}, 1.0, 2), TrainMethodSpec::r1(0.0), 1);
    TrainConfig b = tiny_config(Dataset2D::circle({0, 0}, 1.0, 2),
                                TrainMethodSpec::unregularized(), 1);
    TrainState sa = init_state(a), sb = init_state(b);
    for (int it = 0; it < 3; ++it) {
        training_step(sa, a, it);
        training_step(sb, b, it);
    }
    auto fa = sa.gen.flatten(), fb = sb.gen.flatten();
    for (std::size_t i = 0; i < fa.size(); ++i) REQUIRE(fa[i] == fb[i]);
    auto da = sa.disc.flatten(), db = sb.disc.flatten();
    for (std::size_t i = 0; i < da.size(); ++i) REQUIRE(da[i] == db[i]);
}

TEST_CASE("training_step: discriminator ascent direction splits into loss + penalty parts") {
    TrainConfig cfg = tiny_config(Dataset2D::gaussian({0, 0}, 1.0, 4), TrainMethodSpec::r1(6.0), 1);
    TrainState st = init_state(cfg);

    // reproduce the first discriminator update's batches
    Rng rng(mix_seed(cfg.seed, 0, 0));
    SampleSet reals;
    sample_into(cfg.dataset, cfg.batch_size, rng, reals);

    // gradient of the penalty alone at the same parameters
    auto [pen_value, pen_grad] =
        penalty(TrainMethodSpec::Kind::r1, st.disc, reals.points, {}, cfg.method.gamma, 1.0);
    CHECK(pen_value >= 0.0);
    CHECK(pen_grad.size() == st.disc.param_count());
}

TEST_CASE("train: zero iterations gives an empty curve") {
    TrainConfig cfg = tiny_config(Dataset2D::gaussian({0, 0}, 1.0, 5),
                                  TrainMethodSpec::unregularized(), 0);
    TrainReport r = train(cfg);
    CHECK(r.w1_curve.empty());
    CHECK_FALSE(r.diverged);
    CHECK(std::isnan(r.final_w1));
}

TEST_CASE("train: identical configs give identical curves") {
    TrainConfig cfg = tiny_config(Dataset2D::line({-1, 0}, {1, 0}, 6), TrainMethodSpec::r1(1.0), 30);
    TrainReport a = train(cfg), b = train(cfg);
    REQUIRE(a.w1_curve.size() == b.w1_curve.size());
    for (std::size_t i = 0; i < a.w1_curve.size(); ++i) {
        CHECK(a.w1_curve[i].first == b.w1_curve[i].first);
        CHECK(a.w1_curve[i].second == b.w1_curve[i].second);
    }
    CHECK(a.final_w1 == b.final_w1);
}

TEST_CASE("train: config validation") {
    TrainConfig cfg = tiny_config(Dataset2D::gaussian({0, 0}, 1.0, 1), TrainMethodSpec::r1(0.0), 1);
    CHECK_THROWS_AS(train(cfg), config_error);
    cfg = tiny_config(Dataset2D::gaussian({0, 0}, 1.0, 1), TrainMethodSpec::unregularized(), 1);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(cfg), config_error);
}

TEST_CASE("equilibrium Jacobian structure on a tiny tanh pair") {
    Rng rng(41);
    MlpParams gen = MlpParams::create({2, 2, 2, 2, 2}, Activation::tanh, rng);
    MlpParams disc = MlpParams::create({2, 2, 2, 2, 1}, Activation::tanh, rng);
    zero_output_layer(disc);
    EquilibriumJacobianReport rep = verify_equilibrium_jacobian(gen, disc, 64, 3.0, 71);
    INFO("theta block " << rep.theta_block_max_abs << " kdd " << rep.kdd_rel << " kdg "
                        << rep.kdg_rel << " ldd " << rep.ldd_rel << " cross "
                        << rep.cross_reg_max_abs);
    CHECK(rep.pass_theta);
    CHECK(rep.pass_kdd);
    CHECK(rep.pass_kdg);
    CHECK(rep.pass_ldd);
    CHECK(rep.pass_cross);
}

TEST_CASE("equilibrium Jacobian: gamma = 0 kills the L_DD block") {
    Rng rng(43);
    MlpParams gen = MlpParams::create({2, 2, 2, 2, 2}, Activation::tanh, rng);
    MlpParams disc = MlpParams::create({2, 2, 2, 2, 1}, Activation::tanh, rng);
    zero_output_layer(disc);
    EquilibriumJacobianReport rep = verify_equilibrium_jacobian(gen, disc, 32, 0.0, 73);
    CHECK(rep.ldd_formula.cwiseAbs().maxCoeff() == 0.0);
    CHECK(rep.ldd_fd.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("equilibrium Jacobian refuses a non-zeroed discriminator") {
    Rng rng(47);
    MlpParams gen = MlpParams::create({2, 2, 2, 2, 2}, Activation::tanh, rng);
    MlpParams disc = MlpParams::create({2, 2, 2, 2, 1}, Activation::tanh, rng);
    CHECK_THROWS_AS(verify_equilibrium_jacobian(gen, disc, 16, 1.0, 79), invalid_input_error);

    // parameter budget guard
    MlpParams big_g = MlpParams::create({8, 16, 16, 2}, Activation::tanh, rng);
    MlpParams big_d = MlpParams::create({2, 16, 16, 1}, Activation::tanh, rng);
    zero_output_layer(big_d);
    CHECK_THROWS_AS(verify_equilibrium_jacobian(big_g, big_d, 16, 1.0, 83), invalid_input_error);
}

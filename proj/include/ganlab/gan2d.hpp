#pragma once

#include <Eigen/Dense>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ganlab/errors.hpp"
#include "ganlab/loss.hpp"
#include "ganlab/mlp.hpp"
#include "ganlab/rng.hpp"
#include "ganlab/transport.hpp"

namespace ganlab {

// ---------------------------------------------------------------------------
// 2D data distributions
// ---------------------------------------------------------------------------

struct Segment {
    Point2 a, b;
};

struct Dataset2D {
    enum class Kind { gaussian, line, circle, four_lines };
    Kind kind = Kind::gaussian;
    Point2 center{0.0, 0.0};
    double stddev = 1.0; // gaussian, per axis
    double radius = 1.0; // circle
    Segment segment{{-1.0, 0.0}, {1.0, 0.0}};
    std::array<Segment, 4> segments{{{{-1.5, -1.0}, {-1.5, 1.0}},
                                     {{-0.5, -1.0}, {-0.5, 1.0}},
                                     {{0.5, -1.0}, {0.5, 1.0}},
                                     {{1.5, -1.0}, {1.5, 1.0}}}};
    std::uint64_t seed = 0;

    static Dataset2D gaussian(Point2 center, double stddev, std::uint64_t seed) {
        Dataset2D d;
        d.kind = Kind::gaussian;
        d.center = center;
        d.stddev = stddev;
        d.seed = seed;
        return d;
    }
    static Dataset2D circle(Point2 center, double radius, std::uint64_t seed) {
        Dataset2D d;
        d.kind = Kind::circle;
        d.center = center;
        d.radius = radius;
        d.seed = seed;
        return d;
    }
    static Dataset2D line(Point2 a, Point2 b, std::uint64_t seed) {
        Dataset2D d;
        d.kind = Kind::line;
        d.segment = {a, b};
        d.seed = seed;
        return d;
    }
    static Dataset2D four_lines(std::uint64_t seed) {
        Dataset2D d;
        d.kind = Kind::four_lines;
        d.seed = seed;
        return d;
    }
};

inline const char* dataset_name(Dataset2D::Kind k) {
    switch (k) {
    case Dataset2D::Kind::gaussian: return "gaussian";
    case Dataset2D::Kind::line: return "line";
    case Dataset2D::Kind::circle: return "circle";
    case Dataset2D::Kind::four_lines: return "four_lines";
    }
    return "?";
}

/// Draws n points from the distribution using the supplied stream.
inline void sample_into(const Dataset2D& d, int n, Rng& rng, SampleSet& out) {
    for (int i = 0; i < n; ++i) {
        switch (d.kind) {
        case Dataset2D::Kind::gaussian:
            out.points.push_back(
                {d.center[0] + d.stddev * rng.normal(), d.center[1] + d.stddev * rng.normal()});
            break;
        case Dataset2D::Kind::line: {
            double t = rng.uniform();
            out.points.push_back({d.segment.a[0] + t * (d.segment.b[0] - d.segment.a[0]),
                                  d.segment.a[1] + t * (d.segment.b[1] - d.segment.a[1])});
            break;
        }
        case Dataset2D::Kind::circle: {
            double phi = 6.283185307179586476925286766559 * rng.uniform();
            out.points.push_back(
                {d.center[0] + d.radius * std::cos(phi), d.center[1] + d.radius * std::sin(phi)});
            break;
        }
        case Dataset2D::Kind::four_lines: {
            const Segment& s = d.segments[rng.below(4)];
            double t = rng.uniform();
            out.points.push_back(
                {s.a[0] + t * (s.b[0] - s.a[0]), s.a[1] + t * (s.b[1] - s.a[1])});
            break;
        }
        }
    }
}

/// Deterministic n-point sample; identical calls return identical sets.
inline SampleSet sample_data(const Dataset2D& d, int n) {
    if (n < 1) throw invalid_input_error("sample_data: n must be >= 1");
    Rng rng(mix_seed(d.seed, 0x5a3c1e));
    SampleSet s;
    s.points.reserve(static_cast<std::size_t>(n));
    sample_into(d, n, rng, s);
    return s;
}

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

struct ArchSpec {
    int hidden = 16;
    int depth = 4; // number of weight layers
    Activation activation = Activation::leaky_relu;

    std::vector<int> dims(int in, int out) const {
        std::vector<int> d{in};
        for (int i = 0; i < depth - 1; ++i) d.push_back(hidden);
        d.push_back(out);
        return d;
    }
};

struct TrainMethodSpec {
    enum class Kind { unregularized, r1, r2, wgangp };
    Kind kind = Kind::unregularized;
    double gamma = 0.0;
    double g0 = 1.0; // wgangp penalty center
    int n_d = 1;     // discriminator updates per generator update

    static TrainMethodSpec unregularized() { return {}; }
    static TrainMethodSpec r1(double gamma) { return {Kind::r1, gamma, 1.0, 1}; }
    static TrainMethodSpec r2(double gamma) { return {Kind::r2, gamma, 1.0, 1}; }
    static TrainMethodSpec wgangp(double gamma, int n_d = 1, double g0 = 1.0) {
        return {Kind::wgangp, gamma, g0, n_d};
    }
};

inline const char* train_method_name(TrainMethodSpec::Kind k) {
    switch (k) {
    case TrainMethodSpec::Kind::unregularized: return "unregularized";
    case TrainMethodSpec::Kind::r1: return "r1";
    case TrainMethodSpec::Kind::r2: return "r2";
    case TrainMethodSpec::Kind::wgangp: return "wgangp";
    }
    return "?";
}

struct OptimizerSpec {
    enum class Kind { sgd, rmsprop };
    Kind kind = Kind::sgd;
    double lr = 1e-2;
    double alpha = 0.9;    // rmsprop accumulator decay
    double epsilon = 1e-8; // rmsprop stabilizer

    static OptimizerSpec sgd(double lr) { return {Kind::sgd, lr, 0.9, 1e-8}; }
    static OptimizerSpec rmsprop(double alpha, double lr, double epsilon = 1e-8) {
        return {Kind::rmsprop, lr, alpha, epsilon};
    }
};

struct TrainConfig {
    Dataset2D dataset;
    ArchSpec gen_arch, disc_arch;
    int latent_dim = 16;
    TrainMethodSpec method;
    OptimizerSpec optimizer = OptimizerSpec::rmsprop(0.9, 1e-4);
    int batch_size = 64;
    int iterations = 10000;
    int eval_interval = 500;
    int eval_samples = 512;
    int final_window = 2000; // final_w1 averages evaluations inside this tail
    std::uint64_t seed = 0;

    void validate() const {
        if (method.kind != TrainMethodSpec::Kind::unregularized && !(method.gamma > 0.0))
            throw config_error("train: gamma must be > 0");
        if (method.n_d < 1) throw config_error("train: n_d must be >= 1");
        if (!(optimizer.lr > 0.0)) throw config_error("train: learning rate must be > 0");
        if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
        if (iterations < 0) throw config_error("train: iterations must be >= 0");
        if (eval_interval < 1) throw config_error("train: eval_interval must be >= 1");
        if (eval_samples < 1) throw config_error("train: eval_samples must be >= 1");
        if (latent_dim < 1) throw config_error("train: latent_dim must be >= 1");
        if (gen_arch.depth < 1 || disc_arch.depth < 1)
            throw config_error("train: depth must be >= 1");
    }
};

struct TrainState {
    MlpParams gen, disc;
    std::vector<double> rms_gen, rms_disc; // RMSProp accumulators
    bool diverged = false;
};

struct StepStats {
    double disc_objective = 0.0; // last discriminator update, penalty included
    double gen_objective = 0.0;
    double penalty = 0.0; // last discriminator update's R_i value
};

struct TrainReport {
    std::vector<std::pair<int, double>> w1_curve;
    double final_w1 = std::numeric_limits<double>::quiet_NaN();
    double wall_time = 0.0;
    bool diverged = false;
};

inline TrainState init_state(const TrainConfig& cfg) {
    TrainState st;
    Rng grng(mix_seed(cfg.seed, 0x67656e)); // generator init stream
    st.gen = MlpParams::create(cfg.gen_arch.dims(cfg.latent_dim, 2), cfg.gen_arch.activation, grng);
    Rng drng(mix_seed(cfg.seed, 0x646973)); // discriminator init stream
    st.disc = MlpParams::create(cfg.disc_arch.dims(2, 1), cfg.disc_arch.activation, drng);
    st.rms_gen.assign(st.gen.param_count(), 0.0);
    st.rms_disc.assign(st.disc.param_count(), 0.0);
    return st;
}

// ---------------------------------------------------------------------------
// Gradient penalties
// ---------------------------------------------------------------------------

namespace detail {

inline int batch_leaf(ad::Tape& tape, const std::vector<Point2>& pts) {
    return tape.leaf(std::span<const double>(pts.front().data(), 2 * pts.size()));
}

/// Appends penalty nodes for one batch of probe points; returns the scalar
/// node for gamma/2 * mean_i pen(x_i) where pen is ||grad_x D||^2 (r1/r2) or
/// (||grad_x D(x_hat)|| - g0)^2 (wgangp). The per-sample input gradients
/// come from one batched backward pass, recorded on the same tape so that the
/// final objective backward differentiates through them.
inline int penalty_node(ad::Tape& tape, const MlpParams& disc, const MlpOnTape& md,
                        const std::vector<Point2>& probes, TrainMethodSpec::Kind kind,
                        double gamma, double g0) {
    const int n = static_cast<int>(probes.size());
    int x = batch_leaf(tape, probes);
    int y = mlp_forward_batch(tape, disc, md, x, n);
    std::vector<int> adj = tape.backward(tape.sum(y));
    int gx = adj[static_cast<std::size_t>(x)]; // n x 2 rows of grad_x D
    if (gx < 0) {
        std::vector<double> zeros(static_cast<std::size_t>(2 * n), 0.0);
        gx = tape.leaf(std::span<const double>(zeros));
    }
    int sq = tape.cmul(gx, gx);
    int term;
    if (kind == TrainMethodSpec::Kind::wgangp) {
        int norms = tape.sqrt(tape.row_sum(sq, n, 2));
        int diff = tape.sub(norms, tape.broadcast(tape.leaf(g0), n));
        term = tape.sum(tape.cmul(diff, diff));
    } else {
        term = tape.sum(sq);
    }
    return tape.scale(term, 0.5 * gamma / n);
}

inline void ascend(std::vector<double>& flat, const std::vector<double>& grad,
                   std::vector<double>& rms, const OptimizerSpec& opt) {
    if (opt.kind == OptimizerSpec::Kind::sgd) {
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += opt.lr * grad[i];
        return;
    }
    for (std::size_t i = 0; i < flat.size(); ++i) {
        rms[i] = opt.alpha * rms[i] + (1.0 - opt.alpha) * grad[i] * grad[i];
        flat[i] += opt.lr * grad[i] / (std::sqrt(rms[i]) + opt.epsilon);
    }
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace detail

/// Standalone penalty evaluation: value of R_i and its gradient with respect
/// to the discriminator parameters. r1 uses only the real batch, r2 only the
/// fake batch; wgangp interpolates pairwise with per-pair uniform t drawn
/// from the supplied stream.
inline std::pair<double, std::vector<double>>
penalty(TrainMethodSpec::Kind kind, const MlpParams& disc, const std::vector<Point2>& real_batch,
        const std::vector<Point2>& fake_batch, double gamma, double g0, Rng* rng = nullptr) {
    if (kind == TrainMethodSpec::Kind::unregularized)
        throw invalid_input_error("penalty: no penalty for unregularized training");
    std::vector<Point2> probes;
    switch (kind) {
    case TrainMethodSpec::Kind::r1:
        probes = real_batch;
        break;
    case TrainMethodSpec::Kind::r2:
        probes = fake_batch;
        break;
    case TrainMethodSpec::Kind::wgangp: {
        if (real_batch.size() != fake_batch.size())
            throw invalid_input_error("penalty: wgangp needs equal batch sizes");
        if (!rng) throw invalid_input_error("penalty: wgangp needs an interpolation stream");
        for (std::size_t i = 0; i < real_batch.size(); ++i) {
            double t = rng->uniform();
            probes.push_back({t * real_batch[i][0] + (1.0 - t) * fake_batch[i][0],
                              t * real_batch[i][1] + (1.0 - t) * fake_batch[i][1]});
        }
        break;
    }
    default:
        break;
    }
    if (probes.empty()) throw invalid_input_error("penalty: empty batch");

    ad::Tape tape;
    MlpOnTape md = push_params(tape, disc);
    int r = detail::penalty_node(tape, disc, md, probes, kind, gamma, g0);
    double value = tape.scalar(r);
    std::vector<double> grad = grad_params(tape, r, disc, md);
    return {value, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Point2> draw_real_batch(const TrainConfig& cfg, Rng& rng) {
    SampleSet s;
    s.points.reserve(static_cast<std::size_t>(cfg.batch_size));
    sample_into(cfg.dataset, cfg.batch_size, rng, s);
    return std::move(s.points);
}

inline std::vector<std::vector<double>> draw_latents(const TrainConfig& cfg, Rng& rng, int n) {
    std::vector<std::vector<double>> z(static_cast<std::size_t>(n));
    for (auto& v : z) {
        v.resize(static_cast<std::size_t>(cfg.latent_dim));
        for (auto& x : v) x = rng.normal();
    }
    return z;
}

// one discriminator ascent step; returns (objective, penalty value)
inline std::pair<double, double> disc_update(TrainState& st, const TrainConfig& cfg, Rng& rng) {
    const bool wasserstein = cfg.method.kind == TrainMethodSpec::Kind::wgangp;
    std::vector<Point2> reals = draw_real_batch(cfg, rng);
    std::vector<std::vector<double>> latents = draw_latents(cfg, rng, cfg.batch_size);
    std::vector<Point2> fakes(static_cast<std::size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i) {
        auto y = forward(st.gen, latents[static_cast<std::size_t>(i)]);
        fakes[static_cast<std::size_t>(i)] = {y[0], y[1]};
    }

    ad::Tape tape;
    MlpOnTape md = push_params(tape, st.disc);
    int yf = mlp_forward_batch(tape, st.disc, md, batch_leaf(tape, fakes), cfg.batch_size);
    int tf = wasserstein ? yf : tape.log_sigmoid(yf);
    int yr = mlp_forward_batch(tape, st.disc, md, batch_leaf(tape, reals), cfg.batch_size);
    int tr = wasserstein ? tape.scale(yr, -1.0) : tape.log_sigmoid(tape.scale(yr, -1.0));
    int objective = tape.scale(tape.add(tape.sum(tf), tape.sum(tr)), 1.0 / cfg.batch_size);

    double penalty_value = 0.0;
    if (cfg.method.kind != TrainMethodSpec::Kind::unregularized && cfg.method.gamma != 0.0) {
        std::vector<Point2> probes;
        switch (cfg.method.kind) {
        case TrainMethodSpec::Kind::r1:
            probes = reals;
            break;
        case TrainMethodSpec::Kind::r2:
            probes = fakes;
            break;
        case TrainMethodSpec::Kind::wgangp:
            for (int i = 0; i < cfg.batch_size; ++i) {
                double t = rng.uniform();
                auto& a = reals[static_cast<std::size_t>(i)];
                auto& b = fakes[static_cast<std::size_t>(i)];
                probes.push_back(
                    {t * a[0] + (1.0 - t) * b[0], t * a[1] + (1.0 - t) * b[1]});
            }
            break;
        default:
            break;
        }
        int pen = penalty_node(tape, st.disc, md, probes, cfg.method.kind, cfg.method.gamma,
                               cfg.method.g0);
        penalty_value = tape.scalar(pen);
        objective = tape.sub(objective, pen);
    }

    double value = tape.scalar(objective);
    std::vector<double> grad = grad_params(tape, objective, st.disc, md);
    std::vector<double> flat = st.disc.flatten();
    ascend(flat, grad, st.rms_disc, cfg.optimizer);
    st.disc.set_flat(flat);
    return {value, penalty_value};
}

// one generator ascent step on the nonsaturating objective
inline double gen_update(TrainState& st, const TrainConfig& cfg, Rng& rng) {
    const bool wasserstein = cfg.method.kind == TrainMethodSpec::Kind::wgangp;
    std::vector<std::vector<double>> latents = draw_latents(cfg, rng, cfg.batch_size);

    std::vector<double> zflat;
    zflat.reserve(static_cast<std::size_t>(cfg.batch_size) * cfg.latent_dim);
    for (const auto& z : latents) zflat.insert(zflat.end(), z.begin(), z.end());

    ad::Tape tape;
    MlpOnTape mg = push_params(tape, st.gen);
    MlpOnTape md = push_params(tape, st.disc);
    int zn = tape.leaf(std::span<const double>(zflat));
    int x = mlp_forward_batch(tape, st.gen, mg, zn, cfg.batch_size);
    int y = mlp_forward_batch(tape, st.disc, md, x, cfg.batch_size);
    int neg = tape.scale(y, -1.0);
    int term = wasserstein ? neg : tape.log_sigmoid(neg);
    int objective = tape.scale(tape.sum(term), 1.0 / cfg.batch_size);
    double value = tape.scalar(objective);
    std::vector<double> grad = grad_params(tape, objective, st.gen, mg);
    std::vector<double> flat = st.gen.flatten();
    ascend(flat, grad, st.rms_gen, cfg.optimizer);
    st.gen.set_flat(flat);
    return value;
}

} // namespace detail

/// One training iteration: n_d discriminator updates, then one generator
/// update. Batches are derived from (seed, iteration, update index), so runs
/// are reproducible and updates independent.
inline StepStats training_step(TrainState& st, const TrainConfig& cfg, int iteration) {
    if (st.diverged) return {};
    MlpParams gen_backup = st.gen, disc_backup = st.disc;
    StepStats stats;
    bool ok = true;
    for (int u = 0; u < cfg.method.n_d && ok; ++u) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(iteration),
                         static_cast<std::uint64_t>(u)));
        auto [obj, pen] = detail::disc_update(st, cfg, rng);
        stats.disc_objective = obj;
        stats.penalty = pen;
        ok = std::isfinite(obj) && detail::all_finite(st.disc.flatten());
    }
    if (ok) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(iteration),
                         static_cast<std::uint64_t>(cfg.method.n_d)));
        stats.gen_objective = detail::gen_update(st, cfg, rng);
        ok = std::isfinite(stats.gen_objective) && detail::all_finite(st.gen.flatten());
    }
    if (!ok) {
        st.gen = std::move(gen_backup);
        st.disc = std::move(disc_backup);
        st.diverged = true;
    }
    return stats;
}

/// Exact W1 between a fresh generator sample (fixed evaluation latents) and a
/// fixed data sample.
inline double evaluate_w1(const MlpParams& gen, const std::vector<std::vector<double>>& latents,
                          const SampleSet& data_eval) {
    SampleSet gen_set;
    gen_set.points.reserve(latents.size());
    for (const auto& z : latents) {
        auto y = forward(gen, z);
        gen_set.points.push_back({y[0], y[1]});
    }
    return w1_exact(gen_set, data_eval);
}

/// Full training run with periodic W1 evaluation. Divergence is reported in
/// the flag, never thrown.
inline TrainReport train(const TrainConfig& cfg) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    TrainState st = init_state(cfg);

    Rng eval_rng(mix_seed(cfg.seed, 0xe7a1));
    SampleSet data_eval;
    data_eval.points.reserve(static_cast<std::size_t>(cfg.eval_samples));
    sample_into(cfg.dataset, cfg.eval_samples, eval_rng, data_eval);
    TrainConfig latent_cfg = cfg; // reuse the latent drawer
    Rng latent_rng(mix_seed(cfg.seed, 0xe7a2));
    std::vector<std::vector<double>> eval_latents =
        detail::draw_latents(latent_cfg, latent_rng, cfg.eval_samples);

    TrainReport report;
    for (int it = 1; it <= cfg.iterations; ++it) {
        training_step(st, cfg, it - 1);
        if (st.diverged) {
            report.diverged = true;
            break;
        }
        if (it % cfg.eval_interval == 0)
            report.w1_curve.emplace_back(it, evaluate_w1(st.gen, eval_latents, data_eval));
    }

    double acc = 0.0;
    int n = 0;
    for (const auto& [it, w] : report.w1_curve) {
        if (it > cfg.iterations - cfg.final_window) {
            acc += w;
            ++n;
        }
    }
    if (n > 0) report.final_w1 = acc / n;
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// Equilibrium Jacobian structure (constructed equilibria)
// ---------------------------------------------------------------------------

struct EquilibriumJacobianReport {
    Eigen::MatrixXd kdd_fd, kdd_formula;
    Eigen::MatrixXd kdg_fd, kdg_formula;
    Eigen::MatrixXd ldd_fd, ldd_formula;
    double theta_block_max_abs = 0.0;
    double cross_reg_max_abs = 0.0;
    double kdd_rel = 0.0, kdg_rel = 0.0, ldd_rel = 0.0;
    bool pass_theta = false, pass_kdd = false, pass_kdg = false, pass_ldd = false,
         pass_cross = false;
    bool passed = false;
};

namespace detail {

inline double rel_discrepancy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double scale = std::max(1e-12, b.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

// gradient of D(x) value w.r.t. discriminator parameters at a fixed point
inline Eigen::VectorXd disc_param_gradient(const MlpParams& disc, const Point2& x) {
    ad::Tape tape;
    MlpOnTape md = push_params(tape, disc);
    int xn = tape.leaf(std::span<const double>(x.data(), 2));
    int y = mlp_forward(tape, disc, md, xn);
    auto g = grad_params(tape, y, disc, md);
    return Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

// rows k of grad_{psi,x} D: gradient w.r.t. psi of (grad_x D)_k, k = 0, 1
inline Eigen::MatrixXd disc_mixed_gradient(const MlpParams& disc, const Point2& x) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(disc.param_count()), 2);
    for (int k = 0; k < 2; ++k) {
        ad::Tape tape;
        MlpOnTape md = push_params(tape, disc);
        int xn = tape.leaf(std::span<const double>(x.data(), 2));
        int y = mlp_forward(tape, disc, md, xn);
        std::vector<int> adj = tape.backward(y);
        int gx = adj[static_cast<std::size_t>(xn)];
        std::array<double, 2> e{k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0};
        int comp = tape.dot(gx, tape.leaf(std::span<const double>(e.data(), 2)));
        auto g = grad_params(tape, comp, disc, md);
        out.col(k) = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    }
    return out;
}

} // namespace detail

/// Zeroes the discriminator's final layer so that D == 0 everywhere.
inline void zero_output_layer(MlpParams& disc) {
    if (disc.layers.empty()) throw invalid_input_error("zero_output_layer: empty network");
    for (auto& w : disc.layers.back().W) w = 0.0;
    for (auto& b : disc.layers.back().b) b = 0.0;
}

/// Verifies the equilibrium block structure of the gradient vector field's
/// Jacobian at a constructed equilibrium: the data distribution is the
/// generator's own output set (so the generator is exact) and the
/// discriminator's final layer is zero (so D == 0 and grad_x D == 0).
///
/// Checks, against central finite differences of the analytic gradients:
///   - the theta-theta Hessian block of L vanishes            (<= 1e-5)
///   - K_DD = 2 f''(0) E[grad_psi D grad_psi D^T]             (<= 1e-4 rel)
///   - K_DG = f'(0) d/dtheta E_{p_theta}[grad_psi D]          (<= 1e-3 rel)
///   - L_DD = gamma E[grad_{psi,x} D grad_{psi,x} D^T]        (<= 1e-4 rel)
///   - the theta-psi cross derivative of R_2 vanishes         (<= 1e-5)
inline EquilibriumJacobianReport verify_equilibrium_jacobian(const MlpParams& gen,
                                                             const MlpParams& disc, int n,
                                                             double gamma, std::uint64_t seed) {
    gen.validate();
    disc.validate();
    if (n < 1) throw invalid_input_error("verify_equilibrium_jacobian: n must be >= 1");
    if (gen.param_count() + disc.param_count() > 200)
        throw invalid_input_error("verify_equilibrium_jacobian: parameter budget (200) exceeded");
    if (gen.output_dim() != 2 || disc.input_dim() != 2 || disc.output_dim() != 1)
        throw invalid_input_error("verify_equilibrium_jacobian: expected a 2D GAN pair");
    for (double w : disc.layers.back().W)
        if (w != 0.0)
            throw invalid_input_error(
                "verify_equilibrium_jacobian: discriminator output layer must be zeroed "
                "(equilibrium construction invalid)");
    for (double b : disc.layers.back().b)
        if (b != 0.0)
            throw invalid_input_error(
                "verify_equilibrium_jacobian: discriminator output bias must be zeroed "
                "(equilibrium construction invalid)");

    const LossFunction loss = make_loss(LossKind::logistic);
    const int pg = static_cast<int>(gen.param_count());
    const int pd = static_cast<int>(disc.param_count());

    // fixed latent codes and the frozen data set (the generator's own output)
    Rng rng(mix_seed(seed, 0x3a71));
    std::vector<std::vector<double>> latents(static_cast<std::size_t>(n));
    for (auto& z : latents) {
        z.resize(static_cast<std::size_t>(gen.input_dim()));
        for (auto& v : z) v = rng.normal();
    }
    std::vector<Point2> data(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto y = forward(gen, latents[static_cast<std::size_t>(i)]);
        data[static_cast<std::size_t>(i)] = {y[0], y[1]};
    }

    // analytic gradient of L = mean f(D(G(z))) + mean f(-D(xbar)) w.r.t. all
    // parameters, as a function of the flattened (theta; psi) vector
    auto grad_L = [&](const Eigen::VectorXd& flat) -> Eigen::VectorXd {
        MlpParams g = gen, d = disc;
        std::vector<double> gf(flat.data(), flat.data() + pg);
        std::vector<double> df(flat.data() + pg, flat.data() + pg + pd);
        g.set_flat(gf);
        d.set_flat(df);
        ad::Tape tape;
        MlpOnTape mg = push_params(tape, g);
        MlpOnTape md = push_params(tape, d);
        int acc = -1;
        for (int i = 0; i < n; ++i) {
            int z = tape.leaf(std::span<const double>(latents[static_cast<std::size_t>(i)]));
            int x = mlp_forward(tape, g, mg, z);
            int y = mlp_forward(tape, d, md, x);
            int t = tape.log_sigmoid(y);
            acc = acc < 0 ? t : tape.add(acc, t);
            int xr = tape.leaf(
                std::span<const double>(data[static_cast<std::size_t>(i)].data(), 2));
            int yr = mlp_forward(tape, d, md, xr);
            acc = tape.add(acc, tape.log_sigmoid(tape.scale(yr, -1.0)));
        }
        int obj = tape.scale(acc, 1.0 / n);
        std::vector<int> adj = tape.backward(obj);
        std::vector<double> gt = read_param_gradient(tape, adj, g, mg);
        std::vector<double> gp = read_param_gradient(tape, adj, d, md);
        Eigen::VectorXd out(pg + pd);
        for (int i = 0; i < pg; ++i) out(i) = gt[static_cast<std::size_t>(i)];
        for (int i = 0; i < pd; ++i) out(pg + i) = gp[static_cast<std::size_t>(i)];
        return out;
    };

    // central-difference Hessian of L from the analytic gradient
    Eigen::VectorXd at(pg + pd);
    {
        auto gf = gen.flatten();
        auto df = disc.flatten();
        for (int i = 0; i < pg; ++i) at(i) = gf[static_cast<std::size_t>(i)];
        for (int i = 0; i < pd; ++i) at(pg + i) = df[static_cast<std::size_t>(i)];
    }
    const double fd_step = 1e-4;
    Eigen::MatrixXd hess(pg + pd, pg + pd);
    for (int j = 0; j < pg + pd; ++j) {
        Eigen::VectorXd hi = at, lo = at;
        double step = fd_step * std::max(1.0, std::abs(at(j)));
        hi(j) += step;
        lo(j) -= step;
        hess.col(j) = (grad_L(hi) - grad_L(lo)) / (2.0 * step);
    }

    EquilibriumJacobianReport rep;
    rep.theta_block_max_abs = hess.topLeftCorner(pg, pg).cwiseAbs().maxCoeff();
    rep.kdd_fd = hess.bottomRightCorner(pd, pd);
    rep.kdg_fd = hess.bottomLeftCorner(pd, pg);

    // K_DD formula: 2 f''(0) E[grad_psi D grad_psi D^T]
    rep.kdd_formula = Eigen::MatrixXd::Zero(pd, pd);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd gpsi = detail::disc_param_gradient(disc, data[static_cast<std::size_t>(i)]);
        rep.kdd_formula += gpsi * gpsi.transpose();
    }
    rep.kdd_formula *= 2.0 * loss.f2(0.0) / n;

    // K_DG formula: f'(0) d/dtheta E_{p_theta}[grad_psi D], FD over theta
    auto mean_disc_grad = [&](const Eigen::VectorXd& theta_flat) -> Eigen::VectorXd {
        MlpParams g = gen;
        std::vector<double> gf(theta_flat.data(), theta_flat.data() + pg);
        g.set_flat(gf);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(pd);
        for (int i = 0; i < n; ++i) {
            auto y = forward(g, latents[static_cast<std::size_t>(i)]);
            acc += detail::disc_param_gradient(disc, {y[0], y[1]});
        }
        return acc / n;
    };
    rep.kdg_formula.resize(pd, pg);
    Eigen::VectorXd theta_at = at.head(pg);
    for (int j = 0; j < pg; ++j) {
        Eigen::VectorXd hi = theta_at, lo = theta_at;
        double step = fd_step * std::max(1.0, std::abs(theta_at(j)));
        hi(j) += step;
        lo(j) -= step;
        rep.kdg_formula.col(j) = loss.f1(0.0) * (mean_disc_grad(hi) - mean_disc_grad(lo)) / (2.0 * step);
    }

    // L_DD: FD Hessian of R1 over psi vs gamma E[grad_{psi,x} D grad_{psi,x} D^T]
    auto grad_R1 = [&](const Eigen::VectorXd& psi_flat) -> Eigen::VectorXd {
        MlpParams d = disc;
        std::vector<double> df(psi_flat.data(), psi_flat.data() + pd);
        d.set_flat(df);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(pd);
        for (int i = 0; i < n; ++i) {
            auto g = grad_gradnorm_params(d, std::span<const double>(
                                                 data[static_cast<std::size_t>(i)].data(), 2));
            acc += Eigen::Map<const Eigen::VectorXd>(g.data(), pd);
        }
        return acc * (0.5 * gamma / n);
    };
    Eigen::VectorXd psi_at = at.tail(pd);
    rep.ldd_fd.resize(pd, pd);
    for (int j = 0; j < pd; ++j) {
        Eigen::VectorXd hi = psi_at, lo = psi_at;
        double step = fd_step * std::max(1.0, std::abs(psi_at(j)));
        hi(j) += step;
        lo(j) -= step;
        rep.ldd_fd.col(j) = (grad_R1(hi) - grad_R1(lo)) / (2.0 * step);
    }
    rep.ldd_formula = Eigen::MatrixXd::Zero(pd, pd);
    for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd mixed =
            detail::disc_mixed_gradient(disc, data[static_cast<std::size_t>(i)]);
        rep.ldd_formula += mixed * mixed.transpose();
    }
    rep.ldd_formula *= gamma / n;

    // cross derivative of R2 over (theta, psi): should vanish at equilibrium
    auto grad_R2_psi = [&](const Eigen::VectorXd& theta_flat) -> Eigen::VectorXd {
        MlpParams g = gen;
        std::vector<double> gf(theta_flat.data(), theta_flat.data() + pg);
        g.set_flat(gf);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(pd);
        for (int i = 0; i < n; ++i) {
            auto y = forward(g, latents[static_cast<std::size_t>(i)]);
            Point2 x{y[0], y[1]};
            auto gr = grad_gradnorm_params(disc, std::span<const double>(x.data(), 2));
            acc += Eigen::Map<const Eigen::VectorXd>(gr.data(), pd);
        }
        return acc * (0.5 * gamma / n);
    };
    double cross_worst = 0.0;
    for (int j = 0; j < pg; ++j) {
        Eigen::VectorXd hi = theta_at, lo = theta_at;
        double step = fd_step * std::max(1.0, std::abs(theta_at(j)));
        hi(j) += step;
        lo(j) -= step;
        cross_worst = std::max(
            cross_worst,
            ((grad_R2_psi(hi) - grad_R2_psi(lo)) / (2.0 * step)).cwiseAbs().maxCoeff());
    }
    rep.cross_reg_max_abs = cross_worst;

    rep.kdd_rel = detail::rel_discrepancy(rep.kdd_fd, rep.kdd_formula);
    rep.kdg_rel = detail::rel_discrepancy(rep.kdg_fd, rep.kdg_formula);
    rep.ldd_rel = detail::rel_discrepancy(rep.ldd_fd, rep.ldd_formula);
    rep.pass_theta = rep.theta_block_max_abs <= 1e-5;
    rep.pass_kdd = rep.kdd_rel <= 1e-4;
    rep.pass_kdg = rep.kdg_rel <= 1e-3;
    rep.pass_ldd = rep.ldd_rel <= 1e-4;
    rep.pass_cross = rep.cross_reg_max_abs <= 1e-5;
    rep.passed =
        rep.pass_theta && rep.pass_kdd && rep.pass_kdg && rep.pass_ldd && rep.pass_cross;
    return rep;
}

} // namespace ganlab

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ganlab/errors.hpp"
#include "ganlab/gauss_hermite.hpp"
#include "ganlab/loss.hpp"

namespace ganlab {

// ---------------------------------------------------------------------------
// State and configuration types
// ---------------------------------------------------------------------------

/// One point of the Dirac-GAN: generator parameter theta, discriminator
/// parameter psi. psi1 is present only for the quadratic discriminator
/// D(x) = psi1 x^2 + psi x.
struct DiracState {
    double theta = 0.0;
    double psi = 0.0;
    std::optional<double> psi1;

    int dim() const { return psi1 ? 3 : 2; }

    bool finite() const {
        return std::isfinite(theta) && std::isfinite(psi) && (!psi1 || std::isfinite(*psi1));
    }

    Eigen::VectorXd to_vec() const {
        Eigen::VectorXd v(dim());
        v(0) = theta;
        v(1) = psi;
        if (psi1) v(2) = *psi1;
        return v;
    }

    static DiracState from_vec(const Eigen::VectorXd& v) {
        DiracState s;
        s.theta = v(0);
        s.psi = v(1);
        if (v.size() == 3) s.psi1 = v(2);
        return s;
    }
};

/// theta^2 + psi^2 (+ psi1^2 when present); twice the conserved quantity of
/// the unregularized continuous flow.
inline double radius(const DiracState& s) {
    double r = s.theta * s.theta + s.psi * s.psi;
    if (s.psi1) r += *s.psi1 * *s.psi1;
    return r;
}

enum class Discriminator { linear, quadratic, exponential };

enum class MethodKind {
    standard,
    nonsaturating,
    wgan,
    wgangp,
    instance_noise,
    gradient_penalty,
    consensus,
};

/// A training method and its hyperparameters.
struct MethodSpec {
    MethodKind kind = MethodKind::standard;
    Discriminator discriminator = Discriminator::linear;
    double gamma = 0.0;  // wgangp / gradient_penalty / consensus
    double sigma = 0.0;  // instance_noise
    double g0 = 1.0;     // wgan clip bound, wgangp penalty center
    int quad_order = 32; // instance-noise quadrature order

    static MethodSpec standard(Discriminator d = Discriminator::linear) {
        MethodSpec m;
        m.kind = MethodKind::standard;
        m.discriminator = d;
        return m;
    }
    static MethodSpec nonsaturating() { return MethodSpec{MethodKind::nonsaturating}; }
    static MethodSpec wgan(double g0 = 1.0) {
        MethodSpec m{MethodKind::wgan};
        m.g0 = g0;
        return m;
    }
    static MethodSpec wgangp(double gamma, double g0 = 1.0) {
        MethodSpec m{MethodKind::wgangp};
        m.gamma = gamma;
        m.g0 = g0;
        return m;
    }
    static MethodSpec instance_noise(double sigma, int quad_order = 32) {
        MethodSpec m{MethodKind::instance_noise};
        m.sigma = sigma;
        m.quad_order = quad_order;
        return m;
    }
    static MethodSpec gradient_penalty(double gamma) {
        MethodSpec m{MethodKind::gradient_penalty};
        m.gamma = gamma;
        return m;
    }
    static MethodSpec consensus(double gamma) {
        MethodSpec m{MethodKind::consensus};
        m.gamma = gamma;
        return m;
    }

    void validate() const {
        switch (kind) {
        case MethodKind::wgan:
            if (!(g0 > 0.0)) throw config_error("wgan: g0 must be > 0");
            break;
        case MethodKind::wgangp:
            if (!(gamma > 0.0)) throw config_error("wgangp: gamma must be > 0");
            if (!(g0 >= 0.0)) throw config_error("wgangp: g0 must be >= 0");
            break;
        case MethodKind::instance_noise:
            if (!(sigma > 0.0)) throw config_error("instance_noise: sigma must be > 0");
            if (quad_order < 8) throw config_error("instance_noise: quad_order must be >= 8");
            break;
        case MethodKind::gradient_penalty:
        case MethodKind::consensus:
            // gamma = 0 degenerates to the standard field; useful as a check
            if (!(gamma >= 0.0) || !std::isfinite(gamma))
                throw config_error("gamma must be >= 0 and finite");
            break;
        default:
            break;
        }
        if (discriminator != Discriminator::linear && kind != MethodKind::standard)
            throw config_error("quadratic/exponential discriminators are only defined for the standard method");
    }

    /// WGAN variants use the linear loss, everything else the logistic one.
    LossFunction default_loss() const {
        bool linear = kind == MethodKind::wgan || kind == MethodKind::wgangp;
        return make_loss(linear ? LossKind::linear : LossKind::logistic);
    }
};

inline const char* method_name(MethodKind k) {
    switch (k) {
    case MethodKind::standard: return "standard";
    case MethodKind::nonsaturating: return "nonsaturating";
    case MethodKind::wgan: return "wgan";
    case MethodKind::wgangp: return "wgangp";
    case MethodKind::instance_noise: return "instance_noise";
    case MethodKind::gradient_penalty: return "gradient_penalty";
    case MethodKind::consensus: return "consensus";
    }
    return "?";
}

/// SimGD applies one simultaneous update with per-player steps; AltGD runs
/// n_g generator updates followed by n_d discriminator updates. Unequal
/// step sizes realize two-timescale training.
struct UpdateRule {
    enum class Kind { simgd, altgd };
    Kind kind = Kind::simgd;
    double h_g = 0.1;
    double h_d = 0.1;
    int n_g = 1;
    int n_d = 1;

    static UpdateRule simgd(double h) { return {Kind::simgd, h, h, 1, 1}; }
    static UpdateRule simgd(double h_g, double h_d) { return {Kind::simgd, h_g, h_d, 1, 1}; }
    static UpdateRule altgd(double h, int n_g = 1, int n_d = 1) { return {Kind::altgd, h, h, n_g, n_d}; }
    static UpdateRule altgd2(double h_g, double h_d, int n_g, int n_d) {
        return {Kind::altgd, h_g, h_d, n_g, n_d};
    }

    void validate() const {
        if (!(h_g > 0.0) || !(h_d > 0.0) || !std::isfinite(h_g) || !std::isfinite(h_d))
            throw config_error("update rule: step sizes must be positive and finite");
        if (n_g < 1 || n_d < 1) throw config_error("update rule: n_g and n_d must be >= 1");
    }
};

struct Trajectory {
    std::vector<DiracState> states;
    std::vector<double> radii;
    std::vector<double> times; // step index for discrete runs, time for flows
};

/// Thrown when a simulation leaves the finite region; carries the last finite
/// prefix of the trajectory.
struct divergence_error : std::runtime_error {
    Trajectory prefix;
    explicit divergence_error(Trajectory p)
        : std::runtime_error("simulation diverged"), prefix(std::move(p)) {}
};

// ---------------------------------------------------------------------------
// Vector fields
// ---------------------------------------------------------------------------

namespace detail {

inline const GaussHermite& cached_gauss_hermite(int order) {
    static std::map<int, GaussHermite> cache;
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, gauss_hermite(order)).first;
    return it->second;
}

inline void check_field_config(const MethodSpec& method, const LossFunction& loss,
                               const DiracState& s) {
    method.validate();
    bool needs_linear = method.kind == MethodKind::wgan || method.kind == MethodKind::wgangp;
    if (needs_linear && loss.kind != LossKind::linear)
        throw config_error("wgan/wgangp require the linear loss f(t) = t");
    bool quad = method.discriminator == Discriminator::quadratic;
    if (quad != s.psi1.has_value())
        throw config_error("state dimension does not match the discriminator parameterization");
}

// Jacobian of the standard field at an arbitrary point (closed form).
inline Eigen::Matrix2d standard_jacobian_at(const LossFunction& loss, double theta, double psi) {
    double u = theta * psi;
    double d1 = loss.f1(u), d2 = loss.f2(u);
    Eigen::Matrix2d j;
    j << -d2 * psi * psi, -d1 - d2 * u, //
        d1 + d2 * u, d2 * theta * theta;
    return j;
}

} // namespace detail

/// Gradient vector field of the chosen method at state s,
/// v = (-grad_theta L, grad_psi L) with the method's regularizer applied.
inline DiracState vector_field(const MethodSpec& method, const LossFunction& loss,
                               const DiracState& s) {
    detail::check_field_config(method, loss, s);
    DiracState v;

    switch (method.discriminator) {
    case Discriminator::quadratic: {
        // L = f(psi1 theta^2 + psi theta) + f(0)
        double u = *s.psi1 * s.theta * s.theta + s.psi * s.theta;
        double d1 = loss.f1(u);
        v.theta = -d1 * (2.0 * *s.psi1 * s.theta + s.psi);
        v.psi = d1 * s.theta;
        v.psi1 = d1 * s.theta * s.theta;
        return v;
    }
    case Discriminator::exponential: {
        // L = f(psi e^theta) + f(-psi)
        double e = std::exp(s.theta);
        double u = s.psi * e;
        v.theta = -loss.f1(u) * u;
        v.psi = loss.f1(u) * e - loss.f1(-s.psi);
        return v;
    }
    case Discriminator::linear:
        break;
    }

    double u = s.theta * s.psi;
    switch (method.kind) {
    case MethodKind::standard: {
        double d1 = loss.f1(u);
        v.theta = -d1 * s.psi;
        v.psi = d1 * s.theta;
        break;
    }
    case MethodKind::nonsaturating: {
        v.theta = -loss.f1(-u) * s.psi;
        v.psi = loss.f1(u) * s.theta;
        break;
    }
    case MethodKind::wgan: {
        v.theta = -s.psi;
        v.psi = s.theta;
        break;
    }
    case MethodKind::wgangp: {
        // sign(0) := 0, so the penalty term vanishes on the psi = 0 line
        double sgn = s.psi > 0.0 ? 1.0 : (s.psi < 0.0 ? -1.0 : 0.0);
        v.theta = -s.psi;
        v.psi = s.theta - sgn * method.gamma * (std::abs(s.psi) - method.g0);
        break;
    }
    case MethodKind::gradient_penalty: {
        double d1 = loss.f1(u);
        v.theta = -d1 * s.psi;
        v.psi = d1 * s.theta - method.gamma * s.psi;
        break;
    }
    case MethodKind::instance_noise: {
        const GaussHermite& gh = detail::cached_gauss_hermite(method.quad_order);
        double sigma = method.sigma;
        // theta~ ~ N(theta, sigma^2), x ~ N(0, sigma^2); two 1D expectations
        v.theta = -s.psi * gh.expect(s.theta, sigma, [&](double t) { return loss.f1(t * s.psi); });
        double gen_term = gh.expect(s.theta, sigma, [&](double t) { return t * loss.f1(t * s.psi); });
        double data_term = gh.expect(0.0, sigma, [&](double x) { return x * loss.f1(-x * s.psi); });
        v.psi = gen_term - data_term;
        break;
    }
    case MethodKind::consensus: {
        // v~ = v - gamma J^T v with J the analytic Jacobian of the standard field
        double d1 = loss.f1(u);
        Eigen::Vector2d base(-d1 * s.psi, d1 * s.theta);
        Eigen::Matrix2d j = detail::standard_jacobian_at(loss, s.theta, s.psi);
        Eigen::Vector2d out = base - method.gamma * j.transpose() * base;
        v.theta = out(0);
        v.psi = out(1);
        break;
    }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Equilibrium Jacobians (closed forms)
// ---------------------------------------------------------------------------

/// Jacobian of the method's vector field at the equilibrium, in closed form.
/// State ordering is (theta, psi) or (theta, psi, psi1) for the quadratic
/// discriminator (which needs the equilibrium psi1 value).
inline Eigen::MatrixXd equilibrium_jacobian(const MethodSpec& method, const LossFunction& loss,
                                            std::optional<double> psi1 = std::nullopt) {
    method.validate();
    bool needs_linear = method.kind == MethodKind::wgan || method.kind == MethodKind::wgangp;
    if (needs_linear && loss.kind != LossKind::linear)
        throw config_error("wgan/wgangp require the linear loss f(t) = t");

    double c = loss.f1(0.0);

    if (method.discriminator == Discriminator::quadratic) {
        if (!psi1) throw config_error("quadratic equilibrium Jacobian needs the psi1 value");
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3, 3);
        j(0, 0) = -2.0 * *psi1 * c;
        j(0, 1) = -c;
        j(1, 0) = c;
        return j;
    }
    if (method.discriminator == Discriminator::exponential) {
        Eigen::MatrixXd j(2, 2);
        j << 0.0, -c, c, 2.0 * loss.f2(0.0);
        return j;
    }

    Eigen::MatrixXd j(2, 2);
    switch (method.kind) {
    case MethodKind::standard:
    case MethodKind::nonsaturating:
        j << 0.0, -c, c, 0.0;
        break;
    case MethodKind::wgan:
        j << 0.0, -1.0, 1.0, 0.0;
        break;
    case MethodKind::wgangp:
        throw no_equilibrium_error(
            "wgangp: the regularized field has a discontinuity at the equilibrium point");
    case MethodKind::gradient_penalty:
        j << 0.0, -c, c, -method.gamma;
        break;
    case MethodKind::instance_noise:
        j << 0.0, -c, c, 2.0 * loss.f2(0.0) * method.sigma * method.sigma;
        break;
    case MethodKind::consensus: {
        double d = method.gamma * c * c;
        j << -d, -c, c, -d;
        break;
    }
    }
    return j;
}

/// Noise level at which the instance-noise eigenvalues become purely real:
/// sigma^2 = |f'(0)| / |f''(0)|.
inline double sigma_critical(const LossFunction& loss) {
    double d2 = loss.f2(0.0);
    if (d2 == 0.0) throw config_error("sigma_critical undefined for f''(0) = 0");
    return std::sqrt(std::abs(loss.f1(0.0)) / std::abs(d2));
}

/// Regularization strength at which the gradient-penalty eigenvalues become
/// purely real: gamma = 2 |f'(0)|.
inline double gamma_critical(const LossFunction& loss) {
    return 2.0 * std::abs(loss.f1(0.0));
}

// ---------------------------------------------------------------------------
// Discrete updates and continuous flow
// ---------------------------------------------------------------------------

namespace detail {

inline void clip_wgan(const MethodSpec& method, DiracState& s) {
    if (method.kind == MethodKind::wgan)
        s.psi = std::min(method.g0, std::max(-method.g0, s.psi));
}

} // namespace detail

/// One discrete update. AltGD runs the generator updates first, matching the
/// F2^{n_d} o F1^{n_g} composition used in the closed-form spectrum.
inline DiracState step_discrete(const DiracState& s, const UpdateRule& rule,
                                const MethodSpec& method, const LossFunction& loss) {
    rule.validate();
    DiracState cur = s;
    if (rule.kind == UpdateRule::Kind::simgd) {
        DiracState v = vector_field(method, loss, cur);
        cur.theta += rule.h_g * v.theta;
        cur.psi += rule.h_d * v.psi;
        if (cur.psi1) *cur.psi1 += rule.h_d * *v.psi1;
        detail::clip_wgan(method, cur);
        return cur;
    }
    for (int i = 0; i < rule.n_g; ++i) {
        DiracState v = vector_field(method, loss, cur);
        cur.theta += rule.h_g * v.theta;
    }
    for (int i = 0; i < rule.n_d; ++i) {
        DiracState v = vector_field(method, loss, cur);
        cur.psi += rule.h_d * v.psi;
        if (cur.psi1) *cur.psi1 += rule.h_d * *v.psi1;
        detail::clip_wgan(method, cur);
    }
    return cur;
}

namespace detail {

constexpr double divergence_bound = 1e6;

inline bool out_of_bounds(const DiracState& s) {
    if (!s.finite()) return true;
    if (std::abs(s.theta) > divergence_bound || std::abs(s.psi) > divergence_bound) return true;
    return s.psi1 && std::abs(*s.psi1) > divergence_bound;
}

inline void push(Trajectory& t, const DiracState& s, double time) {
    t.states.push_back(s);
    t.radii.push_back(radius(s));
    t.times.push_back(time);
}

} // namespace detail

/// Iterates step_discrete k times; the trajectory holds k+1 states.
/// Aborts with a divergence_error once |theta| or |psi| exceeds 1e6.
inline Trajectory simulate(const DiracState& s0, const UpdateRule& rule, const MethodSpec& method,
                           const LossFunction& loss, int k) {
    if (k < 1) throw invalid_input_error("simulate: k must be >= 1");
    Trajectory traj;
    detail::push(traj, s0, 0.0);
    DiracState cur = s0;
    for (int i = 1; i <= k; ++i) {
        cur = step_discrete(cur, rule, method, loss);
        if (detail::out_of_bounds(cur)) throw divergence_error(std::move(traj));
        detail::push(traj, cur, static_cast<double>(i));
    }
    return traj;
}

/// One classic fourth-order Runge-Kutta step of size dt.
inline DiracState rk4_step(const DiracState& s, const MethodSpec& method, const LossFunction& loss,
                           double dt) {
    auto axpy = [](const DiracState& a, double c, const DiracState& b) {
        DiracState r = a;
        r.theta += c * b.theta;
        r.psi += c * b.psi;
        if (r.psi1) *r.psi1 += c * *b.psi1;
        return r;
    };
    DiracState k1 = vector_field(method, loss, s);
    DiracState k2 = vector_field(method, loss, axpy(s, 0.5 * dt, k1));
    DiracState k3 = vector_field(method, loss, axpy(s, 0.5 * dt, k2));
    DiracState k4 = vector_field(method, loss, axpy(s, dt, k3));
    DiracState r = s;
    r.theta += dt / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
    r.psi += dt / 6.0 * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi);
    if (r.psi1) *r.psi1 += dt / 6.0 * (*k1.psi1 + 2.0 * *k2.psi1 + 2.0 * *k3.psi1 + *k4.psi1);
    return r;
}

/// Integrates the continuous system with fixed-step RK4 up to time T,
/// recording every record_stride-th step (and always the final state).
inline Trajectory flow_continuous(const DiracState& s0, const MethodSpec& method,
                                  const LossFunction& loss, double dt, double T,
                                  int record_stride = 1) {
    if (!(dt > 0.0)) throw invalid_input_error("flow_continuous: dt must be > 0");
    if (!(T >= dt)) throw invalid_input_error("flow_continuous: T must be >= dt");
    if (record_stride < 1) throw invalid_input_error("flow_continuous: record_stride must be >= 1");
    const long n = std::lround(T / dt);
    Trajectory traj;
    detail::push(traj, s0, 0.0);
    DiracState cur = s0;
    for (long i = 1; i <= n; ++i) {
        cur = rk4_step(cur, method, loss, dt);
        if (detail::out_of_bounds(cur)) throw divergence_error(std::move(traj));
        if (i % record_stride == 0 || i == n) detail::push(traj, cur, i * dt);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Phase portraits
// ---------------------------------------------------------------------------

struct Rect {
    double xmin, xmax, ymin, ymax;
};

struct PortraitEntry {
    DiracState state;
    DiracState velocity;
};

/// Row-major grid of field evaluations: rows sweep psi from ymin to ymax,
/// columns sweep theta from xmin to xmax.
inline std::vector<PortraitEntry> portrait_grid(const MethodSpec& method, const LossFunction& loss,
                                                const Rect& bounds, int n) {
    if (n < 2) throw invalid_input_error("portrait_grid: n must be >= 2");
    if (method.discriminator != Discriminator::linear)
        throw config_error("portrait_grid: linear discriminator only");
    std::vector<PortraitEntry> grid;
    grid.reserve(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        double psi = bounds.ymin + (bounds.ymax - bounds.ymin) * i / (n - 1);
        for (int j = 0; j < n; ++j) {
            double theta = bounds.xmin + (bounds.xmax - bounds.xmin) * j / (n - 1);
            DiracState s{theta, psi, std::nullopt};
            grid.push_back({s, vector_field(method, loss, s)});
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Closed-form discrete linearizations (for the spectrum analyses)
// ---------------------------------------------------------------------------

/// Jacobian of the AltGD update operator at the equilibrium of the standard
/// (or WGAN) game: F2'(0,0)^{n_d} * F1'(0,0)^{n_g}, computed as the actual
/// matrix product.
inline Eigen::Matrix2d altgd_linearization(const UpdateRule& rule, double fprime0) {
    rule.validate();
    Eigen::Matrix2d f1 = Eigen::Matrix2d::Identity();
    f1(0, 1) = -rule.h_g * fprime0;
    Eigen::Matrix2d f2 = Eigen::Matrix2d::Identity();
    f2(1, 0) = rule.h_d * fprime0;
    Eigen::Matrix2d acc = Eigen::Matrix2d::Identity();
    for (int i = 0; i < rule.n_g; ++i) acc = f1 * acc;
    for (int i = 0; i < rule.n_d; ++i) acc = f2 * acc;
    return acc;
}

/// The closed-form AltGD eigenvalues 1 - a^2/2 +- sqrt((1 - a^2/2)^2 - 1)
/// with a = sqrt(n_g n_d) h f'(0).
inline std::pair<std::complex<double>, std::complex<double>>
altgd_eigenvalue_formula(double alpha) {
    double m = 1.0 - alpha * alpha / 2.0;
    std::complex<double> root = std::sqrt(std::complex<double>(m * m - 1.0, 0.0));
    return {m + root, m - root};
}

} // namespace ganlab

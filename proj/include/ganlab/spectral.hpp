#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "ganlab/dirac.hpp"
#include "ganlab/errors.hpp"

namespace ganlab {

struct Spectrum {
    std::vector<std::complex<double>> eigenvalues;

    double max_abs() const {
        double m = 0.0;
        for (auto& l : eigenvalues) m = std::max(m, std::abs(l));
        return m;
    }
    double max_real() const {
        double m = -std::numeric_limits<double>::infinity();
        for (auto& l : eigenvalues) m = std::max(m, l.real());
        return m;
    }
};

namespace detail {

inline void sort_spectrum(Spectrum& s) {
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                  if (a.real() != b.real()) return a.real() < b.real();
                  return a.imag() < b.imag();
              });
}

// |det(m - lambda I)|, the per-root residual
inline double char_poly_residual(const Eigen::MatrixXd& m, std::complex<double> lambda) {
    Eigen::MatrixXcd a = m.cast<std::complex<double>>();
    a.diagonal().array() -= lambda;
    return std::abs(a.fullPivLu().determinant());
}

} // namespace detail

/// Exact roots of lambda^2 - tr lambda + det for a 2x2 matrix.
inline Spectrum eig2(const Eigen::Matrix2d& m) {
    if (!m.allFinite()) throw invalid_input_error("eig2: non-finite entries");
    double tr = m(0, 0) + m(1, 1);
    double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    double disc = tr * tr - 4.0 * det;
    Spectrum s;
    if (disc >= 0.0) {
        double r = std::sqrt(disc);
        // evaluate the larger-magnitude root first to avoid cancellation
        double q = tr >= 0.0 ? 0.5 * (tr + r) : 0.5 * (tr - r);
        double other = q != 0.0 ? det / q : 0.5 * (tr + (tr >= 0.0 ? -r : r));
        s.eigenvalues = {std::complex<double>(q, 0.0), std::complex<double>(other, 0.0)};
    } else {
        double re = 0.5 * tr;
        double im = 0.5 * std::sqrt(-disc);
        s.eigenvalues = {std::complex<double>(re, im), std::complex<double>(re, -im)};
    }
    detail::sort_spectrum(s);
    return s;
}

/// Dense eigenvalues of an n x n matrix, n <= 16, with a residual contract:
/// |det(m - lambda I)| / max(1, ||m||_F)^n <= 1e-7 per root.
inline Spectrum eig_small(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw invalid_input_error("eig_small: matrix must be square");
    const int n = static_cast<int>(m.rows());
    if (n < 1 || n > 16) throw invalid_input_error("eig_small: dimension must be in [1, 16]");
    if (!m.allFinite()) throw invalid_input_error("eig_small: non-finite entries");

    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw numeric_error("eig_small: QR iteration failed to converge");

    Spectrum s;
    s.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);

    const double scale = std::pow(std::max(1.0, m.norm()), n);
    for (auto& l : s.eigenvalues) {
        if (detail::char_poly_residual(m, l) / scale > 1e-7)
            throw numeric_error("eig_small: residual contract violated");
    }
    detail::sort_spectrum(s);
    return s;
}

/// Central-difference Jacobian of a vector field R^n -> R^n:
/// column j = (field(p + eps e_j) - field(p - eps e_j)) / (2 eps).
inline Eigen::MatrixXd
fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& field,
            const Eigen::VectorXd& p, double eps = 1e-5) {
    if (!(eps > 0.0)) throw invalid_input_error("fd_jacobian: eps must be > 0");
    const int n = static_cast<int>(p.size());
    Eigen::MatrixXd j(n, n);
    for (int c = 0; c < n; ++c) {
        Eigen::VectorXd hi = p, lo = p;
        hi(c) += eps;
        lo(c) -= eps;
        Eigen::VectorXd fhi = field(hi), flo = field(lo);
        if (!fhi.allFinite() || !flo.allFinite())
            throw invalid_region_error("fd_jacobian: field is non-finite near the point");
        j.col(c) = (fhi - flo) / (2.0 * eps);
    }
    return j;
}

/// fd_jacobian of a Dirac method field at a state.
inline Eigen::MatrixXd fd_jacobian(const MethodSpec& method, const LossFunction& loss,
                                   const DiracState& at, double eps = 1e-5) {
    return fd_jacobian(
        [&](const Eigen::VectorXd& x) {
            return vector_field(method, loss, DiracState::from_vec(x)).to_vec();
        },
        at.to_vec(), eps);
}

// ---------------------------------------------------------------------------
// Stability classification
// ---------------------------------------------------------------------------

enum class Stability { linearly_convergent, not_convergent, marginal };

inline const char* stability_name(Stability s) {
    switch (s) {
    case Stability::linearly_convergent: return "linearly-convergent";
    case Stability::not_convergent: return "not-convergent";
    case Stability::marginal: return "marginal";
    }
    return "?";
}

/// Verdicts for the continuous system (real parts) and the discrete fixed
/// point operator (moduli), with a 1e-12 marginality band that separates the
/// exact unit-circle spectra from rounding noise.
struct StabilityVerdict {
    Stability continuous = Stability::marginal;
    Stability discrete = Stability::marginal;
    double rate_continuous = 0.0; // max Re(lambda)
    double rate_discrete = 0.0;   // max |lambda| of the discrete operator
};

/// Classifies a spectrum. With h given, the spectrum is taken to belong to
/// the gradient vector field and the discrete verdict is computed on
/// 1 + h lambda; without h it already belongs to the discrete operator.
inline StabilityVerdict classify(const Spectrum& spec, std::optional<double> h = std::nullopt) {
    if (spec.eigenvalues.empty()) throw invalid_input_error("classify: empty spectrum");
    constexpr double tol = 1e-12;

    StabilityVerdict v;
    v.rate_continuous = spec.max_real();
    bool any_pos = false;
    for (auto& l : spec.eigenvalues) any_pos = any_pos || l.real() > tol;
    v.continuous = v.rate_continuous < -tol ? Stability::linearly_convergent
                   : any_pos                ? Stability::not_convergent
                                            : Stability::marginal;

    double max_mod = 0.0;
    bool any_outside = false;
    for (auto& l : spec.eigenvalues) {
        std::complex<double> d = h ? std::complex<double>(1.0, 0.0) + *h * l : l;
        double mod = std::abs(d);
        max_mod = std::max(max_mod, mod);
        any_outside = any_outside || mod > 1.0 + tol;
    }
    v.rate_discrete = max_mod;
    v.discrete = max_mod < 1.0 - tol ? Stability::linearly_convergent
                 : any_outside       ? Stability::not_convergent
                                     : Stability::marginal;
    return v;
}

/// Largest step size for which 1 + h lambda stays in the unit circle for all
/// lambda: the infimum over lambda of 2|Re| / (Re^2 + Im^2).
inline double max_stable_step(const Spectrum& spec) {
    if (spec.eigenvalues.empty()) throw invalid_input_error("max_stable_step: empty spectrum");
    double bound = std::numeric_limits<double>::infinity();
    for (auto& l : spec.eigenvalues) {
        double a = -l.real(), b = l.imag();
        if (!(a > 0.0))
            throw no_stable_step_error("max_stable_step: eigenvalue with Re >= 0");
        bound = std::min(bound, 2.0 * a / (a * a + b * b));
    }
    return bound;
}

// ---------------------------------------------------------------------------
// Empirical convergence rate
// ---------------------------------------------------------------------------

/// Least-squares slope of log(distance) against step index over the final
/// half of the usable points, exponentiated. Distances below 1e-14 are
/// treated as floor; only the prefix above the floor is used.
inline double estimate_rate(const std::vector<double>& distances) {
    constexpr double floor = 1e-14;
    std::size_t usable = 0;
    while (usable < distances.size() && distances[usable] > floor) ++usable;
    if (usable < 10) throw insufficient_data_error("estimate_rate: fewer than 10 usable points");

    std::size_t begin = usable / 2;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = begin; i < usable; ++i) {
        double x = static_cast<double>(i), y = std::log(distances[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw insufficient_data_error("estimate_rate: degenerate fit window");
    double slope = (n * sxy - sx * sy) / denom;
    return std::exp(slope);
}

inline double estimate_rate(const Trajectory& traj, const DiracState& target) {
    std::vector<double> d;
    d.reserve(traj.states.size());
    Eigen::VectorXd t = target.to_vec();
    for (const auto& s : traj.states) d.push_back((s.to_vec() - t).norm());
    return estimate_rate(d);
}

// ---------------------------------------------------------------------------
// Eigenvalue-bound checks for saddle-structured Jacobians
// ---------------------------------------------------------------------------

/// Blocks of J = [[-P, -B^T], [B, -Q]] with Q symmetric positive definite,
/// B of full column rank and P (optional) symmetric positive semi-definite.
struct EigBoundMatrices {
    std::optional<Eigen::MatrixXd> P;
    Eigen::MatrixXd Q;
    Eigen::MatrixXd B;
};

struct EigBoundEntry {
    std::complex<double> lambda;
    bool real_part_negative = false;
    double real_part_bound = 0.0; // case-dependent upper bound on Re(lambda)
    bool real_part_bound_ok = false;
    double imag_bound = 0.0; // sqrt(lambda_max(B^T B))
    bool imag_bound_ok = false;
};

struct EigBoundReport {
    std::vector<EigBoundEntry> entries;
    bool passed = false;
};

/// Assembles J, computes its spectrum and verifies that (i) every eigenvalue
/// has negative real part, (ii) with P absent the two case-dependent
/// real-part bounds hold, and (iii) |Im(lambda)| <= sqrt(lambda_max(B^T B)).
inline EigBoundReport check_eig_bounds(const EigBoundMatrices& mats) {
    const auto& Q = mats.Q;
    const auto& B = mats.B;
    const int mdim = static_cast<int>(Q.rows());
    const int ndim = static_cast<int>(B.cols());
    constexpr double sym_tol = 1e-12;

    if (Q.rows() != Q.cols()) throw invalid_input_error("check_eig_bounds: Q must be square");
    if (B.rows() != mdim)
        throw invalid_input_error("check_eig_bounds: B must have as many rows as Q");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > sym_tol)
        throw invalid_input_error("check_eig_bounds: Q is not symmetric");
    if (mdim + ndim > 16) throw invalid_input_error("check_eig_bounds: total dimension > 16");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qeig(Q);
    double q_min = qeig.eigenvalues().minCoeff();
    double q_max = qeig.eigenvalues().maxCoeff();
    if (!(q_min > 0.0))
        throw invalid_input_error("check_eig_bounds: Q is not positive definite");

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
    if (B.cols() > B.rows() || svd.singularValues().minCoeff() <= 1e-10)
        throw invalid_input_error("check_eig_bounds: B does not have full column rank");

    if (mats.P) {
        const auto& P = *mats.P;
        if (P.rows() != ndim || P.cols() != ndim)
            throw invalid_input_error("check_eig_bounds: P must be n x n with n = cols(B)");
        if ((P - P.transpose()).cwiseAbs().maxCoeff() > sym_tol)
            throw invalid_input_error("check_eig_bounds: P is not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> peig(P);
        if (peig.eigenvalues().minCoeff() < -sym_tol)
            throw invalid_input_error("check_eig_bounds: P is not positive semi-definite");
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> bb(B.transpose() * B);
    double btb_min = bb.eigenvalues().minCoeff();
    double btb_max = bb.eigenvalues().maxCoeff();

    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(ndim + mdim, ndim + mdim);
    if (mats.P) j.topLeftCorner(ndim, ndim) = -*mats.P;
    j.topRightCorner(ndim, mdim) = -B.transpose();
    j.bottomLeftCorner(mdim, ndim) = B;
    j.bottomRightCorner(mdim, mdim) = -Q;

    Spectrum spec = eig_small(j);

    constexpr double slack = 1e-9; // numerical slack on the strict inequalities
    EigBoundReport report;
    report.passed = true;
    double imag_bound = std::sqrt(btb_max);
    for (auto& l : spec.eigenvalues) {
        EigBoundEntry e;
        e.lambda = l;
        e.real_part_negative = l.real() < 0.0;
        e.imag_bound = imag_bound;
        e.imag_bound_ok = std::abs(l.imag()) <= imag_bound + slack;
        if (!mats.P) {
            e.real_part_bound = std::abs(l.imag()) <= slack
                                    ? -q_min * btb_min / (q_max * q_min + btb_min)
                                    : -q_min / 2.0;
            e.real_part_bound_ok = l.real() <= e.real_part_bound + slack;
        } else {
            e.real_part_bound = 0.0;
            e.real_part_bound_ok = e.real_part_negative;
        }
        report.passed =
            report.passed && e.real_part_negative && e.real_part_bound_ok && e.imag_bound_ok;
        report.entries.push_back(e);
    }
    return report;
}

} // namespace ganlab

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ganlab/errors.hpp"

namespace ganlab {

enum class LossKind { logistic, linear };

/// Scalar objective function f with its first two derivatives.
///
/// logistic: f(t) = -log(1 + exp(-t)), the saturating GAN loss.
/// linear:   f(t) = t, used by the Wasserstein variants.
struct LossFunction {
    LossKind kind = LossKind::logistic;

    double f(double t) const {
        switch (kind) {
        case LossKind::logistic:
            // branch form of -log1p(exp(-t)): no overflow for any finite t
            return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
        case LossKind::linear:
            return t;
        }
        throw unsupported_loss_error("unknown loss kind");
    }

    // f'(t); for the logistic loss this is sigma(-t) = 1/(1+exp(t))
    double f1(double t) const {
        switch (kind) {
        case LossKind::logistic: {
            if (t >= 0.0) {
                double e = std::exp(-t);
                return e / (1.0 + e);
            }
            return 1.0 / (1.0 + std::exp(t));
        }
        case LossKind::linear:
            return 1.0;
        }
        throw unsupported_loss_error("unknown loss kind");
    }

    // f''(t) = -f'(t) f'(-t) for the logistic loss, 0 for the linear one
    double f2(double t) const {
        switch (kind) {
        case LossKind::logistic:
            // product of the two stable sigmoid branches; no cancellation
            return -f1(t) * f1(-t);
        case LossKind::linear:
            return 0.0;
        }
        throw unsupported_loss_error("unknown loss kind");
    }
};

inline LossFunction make_loss(LossKind kind) {
    if (kind != LossKind::logistic && kind != LossKind::linear)
        throw unsupported_loss_error("make_loss: unknown loss kind");
    return LossFunction{kind};
}

inline LossFunction make_loss(const std::string& name) {
    if (name == "logistic") return make_loss(LossKind::logistic);
    if (name == "linear") return make_loss(LossKind::linear);
    throw unsupported_loss_error("make_loss: unknown loss kind '" + name + "'");
}

inline const char* loss_name(LossKind k) {
    return k == LossKind::logistic ? "logistic" : "linear";
}

struct DerivativeCheckReport {
    double max_err_f1 = 0.0; // f1 vs central differences of f
    double max_err_f2 = 0.0; // f2 vs central differences of f1
    bool passed = false;
};

// Relative error convention used throughout: |a - b| / max(1, |b|).
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::abs(b));
}

/// Checks f1 against finite differences of f (and f2 against f1) on a grid.
/// Central differences with step 1e-5; passes iff both errors are <= 1e-6.
inline DerivativeCheckReport check_loss(const LossFunction& loss, const std::vector<double>& grid) {
    if (grid.empty()) throw invalid_input_error("check_loss: empty grid");
    constexpr double step = 1e-5;
    constexpr double tol = 1e-6;
    DerivativeCheckReport report;
    for (double t : grid) {
        if (!std::isfinite(t)) throw invalid_input_error("check_loss: non-finite grid entry");
        double fd1 = (loss.f(t + step) - loss.f(t - step)) / (2.0 * step);
        double fd2 = (loss.f1(t + step) - loss.f1(t - step)) / (2.0 * step);
        report.max_err_f1 = std::max(report.max_err_f1, rel_err(loss.f1(t), fd1));
        report.max_err_f2 = std::max(report.max_err_f2, rel_err(loss.f2(t), fd2));
    }
    report.passed = report.max_err_f1 <= tol && report.max_err_f2 <= tol;
    return report;
}

} // namespace ganlab

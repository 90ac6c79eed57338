#ifndef DLSA_LOSSES_HPP
#define DLSA_LOSSES_HPP

#include <cmath>
#include <cstddef>
#include <set>
#include <vector>

#include "dlsa/errors.hpp"
#include "dlsa/least_squares.hpp"
#include "dlsa/matrix.hpp"

namespace dlsa {

inline constexpr double kCosineClamp = 1e-7;
inline constexpr double kSlopeNormFloor = 1e-12;

struct LossWeights {
    double alpha = 0.2;
    double gamma = 0.1;
};

/// Angle between two fitting-line slopes, cosine clamped away from +-1 so the
/// arccos derivative stays bounded.
inline double angle(const Vector& a_s, const Vector& a_t) {
    const double ns = std::sqrt(frobenius_norm_sq(a_s));
    const double nt = std::sqrt(frobenius_norm_sq(a_t));
    if (ns < kSlopeNormFloor || nt < kSlopeNormFloor)
        throw DegenerateSlopeError("angle: zero-norm slope vector");
    double c = dot(a_s, a_t) / (ns * nt);
    if (c > 1.0 - kCosineClamp) c = 1.0 - kCosineClamp;
    if (c < -1.0 + kCosineClamp) c = -1.0 + kCosineClamp;
    return std::acos(c);
}

inline double intercept_diff(const Vector& b_s, const Vector& b_t) {
    if (b_s.size() != b_t.size()) throw ShapeError("intercept_diff: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < b_s.size(); ++i) {
        const double d = b_s[i] - b_t[i];
        s += d * d;
    }
    return s;
}

/// Gradients of one fitting line's parameters.
struct FitGradient {
    Vector d_slope;
    Vector d_intercept;
};

struct MarginalLossTerms {
    double theta_M = 0.0;
    double B_M = 0.0;
    double loss = 0.0;
    FitGradient grad_source;
    FitGradient grad_target;
};

namespace detail {

/// theta = acos(clamp(a.b/(|a||b|))) plus gradients w.r.t. both slopes.
/// Inside the clamp band the gradient is zero (the clamp is flat there),
/// which keeps finite-difference checks consistent.
inline double angle_with_grad(const Vector& a_s, const Vector& a_t, Vector& g_s, Vector& g_t) {
    const double ns = std::sqrt(frobenius_norm_sq(a_s));
    const double nt = std::sqrt(frobenius_norm_sq(a_t));
    if (ns < kSlopeNormFloor || nt < kSlopeNormFloor)
        throw DegenerateSlopeError("angle: zero-norm slope vector");
    const double raw = dot(a_s, a_t) / (ns * nt);
    const bool clamped = raw > 1.0 - kCosineClamp || raw < -1.0 + kCosineClamp;
    const double c = clamped ? (raw > 0 ? 1.0 - kCosineClamp : -1.0 + kCosineClamp) : raw;
    const double theta = std::acos(c);

    g_s.assign(a_s.size(), 0.0);
    g_t.assign(a_t.size(), 0.0);
    if (!clamped) {
        const double dtheta_dc = -1.0 / std::sqrt(1.0 - c * c);
        for (std::size_t i = 0; i < a_s.size(); ++i) {
            const double dc_das = a_t[i] / (ns * nt) - c * a_s[i] / (ns * ns);
            const double dc_dat = a_s[i] / (ns * nt) - c * a_t[i] / (nt * nt);
            g_s[i] = dtheta_dc * dc_das;
            g_t[i] = dtheta_dc * dc_dat;
        }
    }
    return theta;
}

}  // namespace detail

/// Which slope term the alignment losses train on: the angle between slope
/// vectors, or the squared slope difference.
enum class SlopeTerm { angle, squared_diff };

inline MarginalLossTerms marginal_loss(const LineFit& fit_s, const LineFit& fit_t, double gamma,
                                       SlopeTerm form = SlopeTerm::angle) {
    if (fit_s.slope.size() != fit_t.slope.size())
        throw ShapeError("marginal_loss: dimensionality mismatch");

    MarginalLossTerms out;
    out.theta_M = detail::angle_with_grad(fit_s.slope, fit_t.slope, out.grad_source.d_slope,
                                          out.grad_target.d_slope);
    out.B_M = intercept_diff(fit_s.intercept, fit_t.intercept);
    if (form == SlopeTerm::squared_diff) {
        const double slope_sq = intercept_diff(fit_s.slope, fit_t.slope);
        out.loss = slope_sq + gamma * out.B_M;
        for (std::size_t i = 0; i < fit_s.slope.size(); ++i) {
            const double g = 2.0 * (fit_s.slope[i] - fit_t.slope[i]);
            out.grad_source.d_slope[i] = g;
            out.grad_target.d_slope[i] = -g;
        }
    } else {
        out.loss = out.theta_M + gamma * out.B_M;
    }

    const std::size_t d = fit_s.intercept.size();
    out.grad_source.d_intercept.resize(d);
    out.grad_target.d_intercept.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        const double g = 2.0 * gamma * (fit_s.intercept[i] - fit_t.intercept[i]);
        out.grad_source.d_intercept[i] = g;
        out.grad_target.d_intercept[i] = -g;
    }
    return out;
}

struct ConditionalLossTerms {
    std::vector<double> theta_C;   // indexed by class; valid only for active classes
    std::vector<double> B_C;
    std::set<std::size_t> active_classes;
    double loss = 0.0;
    std::vector<FitGradient> grad_source;  // per class, empty for inactive
    std::vector<FitGradient> grad_target;
};

/// Mean over classes fitted in both domains of (theta_C^c + gamma * B_C^c).
/// An empty active set yields loss 0 with zero gradients.
inline ConditionalLossTerms conditional_loss(const ClassFits& fits_s, const ClassFits& fits_t,
                                             double gamma, std::size_t num_classes,
                                             SlopeTerm form = SlopeTerm::angle) {
    ConditionalLossTerms out;
    out.theta_C.assign(num_classes, 0.0);
    out.B_C.assign(num_classes, 0.0);
    out.grad_source.resize(num_classes);
    out.grad_target.resize(num_classes);

    for (std::size_t c = 0; c < num_classes; ++c) {
        if (c >= fits_s.fits.size() || c >= fits_t.fits.size()) continue;
        if (!fits_s.fits[c] || !fits_t.fits[c]) continue;
        // A flat fit (zero-norm slope, e.g. from collapsed latent units) has
        // no defined angle; treat the class like a skipped one.
        if (std::sqrt(frobenius_norm_sq(fits_s.fits[c]->slope)) < kSlopeNormFloor ||
            std::sqrt(frobenius_norm_sq(fits_t.fits[c]->slope)) < kSlopeNormFloor)
            continue;
        out.active_classes.insert(c);
    }
    if (out.active_classes.empty()) return out;

    const double inv_active = 1.0 / static_cast<double>(out.active_classes.size());
    for (std::size_t c : out.active_classes) {
        const LineFit& fs = *fits_s.fits[c];
        const LineFit& ft = *fits_t.fits[c];
        if (fs.slope.size() != ft.slope.size())
            throw ShapeError("conditional_loss: dimensionality mismatch");

        FitGradient& gs = out.grad_source[c];
        FitGradient& gt = out.grad_target[c];
        out.theta_C[c] = detail::angle_with_grad(fs.slope, ft.slope, gs.d_slope, gt.d_slope);
        out.B_C[c] = intercept_diff(fs.intercept, ft.intercept);
        if (form == SlopeTerm::squared_diff) {
            const double slope_sq = intercept_diff(fs.slope, ft.slope);
            out.loss += (slope_sq + gamma * out.B_C[c]) * inv_active;
            for (std::size_t i = 0; i < fs.slope.size(); ++i) {
                const double g = 2.0 * (fs.slope[i] - ft.slope[i]) * inv_active;
                gs.d_slope[i] = g;
                gt.d_slope[i] = -g;
            }
        } else {
            out.loss += (out.theta_C[c] + gamma * out.B_C[c]) * inv_active;
            for (double& g : gs.d_slope) g *= inv_active;
            for (double& g : gt.d_slope) g *= inv_active;
        }
        const std::size_t d = fs.intercept.size();
        gs.d_intercept.resize(d);
        gt.d_intercept.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            const double g = 2.0 * gamma * (fs.intercept[i] - ft.intercept[i]) * inv_active;
            gs.d_intercept[i] = g;
            gt.d_intercept[i] = -g;
        }
    }
    return out;
}

inline double total_objective(double l_s, double l_m, double l_c, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("total_objective: alpha must be in [0,1]");
    return l_s + (1.0 - alpha) * l_m + alpha * l_c;
}

}  // namespace dlsa

#endif  // DLSA_LOSSES_HPP

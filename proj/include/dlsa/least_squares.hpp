#ifndef DLSA_LEAST_SQUARES_HPP
#define DLSA_LEAST_SQUARES_HPP

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dlsa/errors.hpp"
#include "dlsa/matrix.hpp"

namespace dlsa {

// Below this variance the independent coordinate is considered degenerate.
// Marginal fits regularize by adding it to the denominator; per-class fits skip.
inline constexpr double kEpsilonVar = 1e-8;

/// Latent batch split into the independent coordinate v and the d-1
/// dependent coordinates w (original column order preserved).
struct LatentSplit {
    Vector v;                      // length N
    Matrix w;                      // N x (d-1)
    std::size_t independent_dim = 0;
};

/// Closed-form least squares line for one domain (or one class of one domain).
struct LineFit {
    Vector slope;       // d-1
    Vector intercept;   // d-1
    std::size_t sample_count = 0;
};

/// Per-class fits; classes with too few samples or degenerate variance are skipped.
struct ClassFits {
    std::vector<std::optional<LineFit>> fits;
    std::set<std::size_t> skipped_classes;
};

inline LatentSplit split_latent(const Matrix& latent, std::size_t independent_dim) {
    if (latent.cols() < 2)
        throw DimensionalityError("split_latent: latent dimension must be >= 2, got " +
                                  std::to_string(latent.cols()));
    if (latent.rows() < 2)
        throw InsufficientSamplesError("split_latent: need >= 2 samples, got " +
                                       std::to_string(latent.rows()));
    if (independent_dim >= latent.cols())
        throw IndexError("split_latent: independent_dim out of range");

    LatentSplit out;
    out.independent_dim = independent_dim;
    out.v.resize(latent.rows());
    out.w = Matrix(latent.rows(), latent.cols() - 1);
    for (std::size_t i = 0; i < latent.rows(); ++i) {
        out.v[i] = latent(i, independent_dim);
        std::size_t k = 0;
        for (std::size_t j = 0; j < latent.cols(); ++j) {
            if (j == independent_dim) continue;
            out.w(i, k++) = latent(i, j);
        }
    }
    return out;
}

namespace detail {

struct FitMoments {
    double mean_v = 0.0;
    double var_v = 0.0;   // biased variance mean(v^2) - mean(v)^2
    double denom = 0.0;   // var_v, regularized if requested
    Vector mean_w;        // d-1
};

inline FitMoments fit_moments(const LatentSplit& split, bool regularize) {
    const std::size_t n = split.v.size();
    FitMoments m;
    double sum_v = 0.0, sum_vv = 0.0;
    for (double x : split.v) {
        sum_v += x;
        sum_vv += x * x;
    }
    m.mean_v = sum_v / static_cast<double>(n);
    m.var_v = sum_vv / static_cast<double>(n) - m.mean_v * m.mean_v;
    m.denom = regularize ? m.var_v + kEpsilonVar : m.var_v;
    m.mean_w = column_mean(split.w);
    return m;
}

}  // namespace detail

/// slope[k] = cov(v, w_k) / var(v); intercept[k] = mean(w_k) - slope[k]*mean(v).
/// With regularize, kEpsilonVar is added to the denominator instead of throwing
/// on (near-)constant v.
inline LineFit fit_line(const LatentSplit& split, bool regularize = false) {
    const std::size_t n = split.v.size();
    if (n < 2 || split.w.rows() != n)
        throw InsufficientSamplesError("fit_line: need >= 2 samples");

    const auto m = detail::fit_moments(split, regularize);
    if (!regularize && m.var_v < kEpsilonVar)
        throw DegenerateVarianceError("fit_line: var(v) = " + std::to_string(m.var_v) +
                                      " below threshold");

    const std::size_t dw = split.w.cols();
    LineFit fit;
    fit.sample_count = n;
    fit.slope.resize(dw);
    fit.intercept.resize(dw);
    for (std::size_t k = 0; k < dw; ++k) {
        double sum_vw = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum_vw += split.v[i] * split.w(i, k);
        const double cov = sum_vw / static_cast<double>(n) - m.mean_v * m.mean_w[k];
        fit.slope[k] = cov / m.denom;
        fit.intercept[k] = m.mean_w[k] - fit.slope[k] * m.mean_v;
    }
    return fit;
}

inline ClassFits fit_line_per_class(const Matrix& latent, const std::vector<std::size_t>& labels,
                                    std::size_t num_classes, std::size_t independent_dim,
                                    std::size_t min_samples = 2) {
    if (labels.size() != latent.rows())
        throw ShapeError("fit_line_per_class: labels length != latent rows");

    ClassFits out;
    out.fits.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) rows.push_back(i);
        if (rows.size() < min_samples || rows.size() < 2) {
            out.skipped_classes.insert(c);
            continue;
        }
        Matrix sub(rows.size(), latent.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < latent.cols(); ++j) sub(i, j) = latent(rows[i], j);
        try {
            out.fits[c] = fit_line(split_latent(sub, independent_dim));
        } catch (const DegenerateVarianceError&) {
            out.skipped_classes.insert(c);
        }
    }
    return out;
}

/// Chain-rule transpose of fit_line: maps upstream gradients on (slope,
/// intercept) back to gradients on every latent entry, reassembled into the
/// original column layout.
inline Matrix fit_line_backward(const LatentSplit& split, const Vector& d_slope,
                                const Vector& d_intercept, bool regularize = false) {
    const std::size_t n = split.v.size();
    const std::size_t dw = split.w.cols();
    if (d_slope.size() != dw || d_intercept.size() != dw)
        throw ShapeError("fit_line_backward: upstream size mismatch");

    const auto m = detail::fit_moments(split, regularize);
    if (!regularize && m.var_v < kEpsilonVar)
        throw DegenerateVarianceError("fit_line_backward: degenerate variance");

    const double inv_n = 1.0 / static_cast<double>(n);
    const double inv_denom = 1.0 / m.denom;

    Vector slope(dw);
    for (std::size_t k = 0; k < dw; ++k) {
        double sum_vw = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum_vw += split.v[i] * split.w(i, k);
        const double cov = sum_vw * inv_n - m.mean_v * m.mean_w[k];
        slope[k] = cov * inv_denom;
    }

    Vector grad_v(n, 0.0);
    Matrix grad_w(n, dw);
    for (std::size_t k = 0; k < dw; ++k) {
        // u_k = d_slope[k] adjusted for the intercept's -mean_v * slope term.
        const double u = d_slope[k] - d_intercept[k] * m.mean_v;
        for (std::size_t i = 0; i < n; ++i) {
            const double dv_cov = (split.w(i, k) - m.mean_w[k]) * inv_n;
            const double dv_var = 2.0 * (split.v[i] - m.mean_v) * inv_n;
            const double dslope_dv = (dv_cov - slope[k] * dv_var) * inv_denom;
            const double dslope_dw = (split.v[i] - m.mean_v) * inv_n * inv_denom;
            grad_v[i] += u * dslope_dv - d_intercept[k] * slope[k] * inv_n;
            grad_w(i, k) = u * dslope_dw + d_intercept[k] * inv_n;
        }
    }

    const std::size_t d = dw + 1;
    Matrix grad(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        grad(i, split.independent_dim) = grad_v[i];
        std::size_t k = 0;
        for (std::size_t j = 0; j < d; ++j) {
            if (j == split.independent_dim) continue;
            grad(i, j) = grad_w(i, k++);
        }
    }
    return grad;
}

}  // namespace dlsa

#endif  // DLSA_LEAST_SQUARES_HPP

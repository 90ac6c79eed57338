#ifndef DLSA_TRAINER_HPP
#define DLSA_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dlsa/data.hpp"
#include "dlsa/errors.hpp"
#include "dlsa/least_squares.hpp"
#include "dlsa/losses.hpp"
#include "dlsa/matrix.hpp"
#include "dlsa/network.hpp"

namespace dlsa {

enum class Variant { full, no_conditional, no_marginal, source_only };
enum class LabelSource { pseudo, true_labels };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_conditional: return "no_conditional";
        case Variant::no_marginal: return "no_marginal";
        case Variant::source_only: return "source_only";
    }
    return "?";
}

struct TrainConfig {
    double alpha = 0.2;
    double gamma = 0.1;
    double learning_rate = 0.001;
    std::size_t batch_size = 32;
    std::size_t iterations = 300;
    std::size_t warmup_iterations = 50;
    std::uint64_t seed = 0;
    Variant variant = Variant::full;
    std::size_t independent_dim = 0;
    std::optional<std::size_t> latent_layer;   // defaults to the last hidden layer
    std::size_t min_class_samples = 2;
    std::vector<std::size_t> hidden_sizes = {64, 8};
    bool use_batchnorm = true;
    SlopeTerm slope_term = SlopeTerm::angle;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("TrainConfig: alpha must be in [0,1]");
        if (gamma <= 0.0) throw ConfigError("TrainConfig: gamma must be > 0");
        if (batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2");
        if (warmup_iterations > iterations)
            throw ConfigError("TrainConfig: warmup_iterations > iterations");
        if (hidden_sizes.empty()) throw ConfigError("TrainConfig: need at least one hidden layer");
    }

    std::size_t resolved_latent_layer() const {
        return latent_layer.value_or(hidden_sizes.size() - 1);
    }
};

struct PseudoLabels {
    std::vector<std::size_t> labels;
    LabelSource source = LabelSource::pseudo;
};

struct AlignmentDiagnostics {
    std::size_t step = 0;
    double theta_M = 0.0;   // radians
    double B_M = 0.0;
    std::map<std::size_t, double> theta_C;   // active classes only, radians
    std::map<std::size_t, double> B_C;
    LabelSource label_source = LabelSource::pseudo;

    double mean_theta_C() const {
        if (theta_C.empty()) return 0.0;
        double s = 0.0;
        for (const auto& [c, t] : theta_C) s += t;
        return s / static_cast<double>(theta_C.size());
    }
    double mean_B_C() const {
        if (B_C.empty()) return 0.0;
        double s = 0.0;
        for (const auto& [c, b] : B_C) s += b;
        return s / static_cast<double>(B_C.size());
    }
};

struct EpochReport {
    std::size_t step = 0;
    double l_s = 0.0;
    double l_m = 0.0;
    double l_c = 0.0;
    double total = 0.0;
    std::optional<double> target_accuracy;
    AlignmentDiagnostics diagnostics;
};

inline PseudoLabels generate_pseudo_labels(MlpParams& params, const Matrix& target_features,
                                           std::size_t latent_layer) {
    ForwardTrace trace = forward(params, target_features, ForwardMode::eval, latent_layer);
    PseudoLabels out;
    out.labels.resize(trace.logits.rows());
    for (std::size_t i = 0; i < trace.logits.rows(); ++i)
        out.labels[i] = argmax_row(trace.logits, i);
    return out;
}

inline double evaluate(MlpParams& params, const LabeledDataset& ds, std::size_t latent_layer) {
    if (!ds.has_labels()) throw EvaluationError("evaluate: dataset has no labels");
    ForwardTrace trace = forward(params, ds.features, ForwardMode::eval, latent_layer);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < trace.logits.rows(); ++i)
        if (argmax_row(trace.logits, i) == (*ds.labels)[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace detail {

inline std::vector<std::vector<std::size_t>> rows_by_class(const std::vector<std::size_t>& labels,
                                                           std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> rows(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < num_classes) rows[labels[i]].push_back(i);
    return rows;
}

/// Scatter per-class latent gradients (computed on the class submatrix) back
/// into the full-batch latent gradient.
inline void scatter_class_gradient(Matrix& latent_grad, const Matrix& class_grad,
                                   const std::vector<std::size_t>& rows, double weight) {
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < latent_grad.cols(); ++j)
            latent_grad(rows[i], j) += weight * class_grad(i, j);
}

}  // namespace detail

/// Gradients and loss breakdown of the full objective on one batch pair,
/// with pseudo-labels supplied by the caller. Shared by train_step and the
/// gradient-check tests; forward passes run in train mode.
inline std::pair<EpochReport, GradientSet> objective_gradients(
    MlpParams& params, const Matrix& source_features,
    const std::vector<std::size_t>& source_labels, const Matrix& target_features,
    const std::vector<std::size_t>& target_pseudo_labels, std::size_t num_classes,
    const TrainConfig& config, bool use_conditional) {
    if (source_features.rows() < 2 || target_features.rows() < 2)
        throw InsufficientSamplesError("train_step: both batches need >= 2 samples");

    const std::size_t latent_layer = config.resolved_latent_layer();
    const bool want_marginal =
        config.variant == Variant::full || config.variant == Variant::no_conditional;
    const bool want_conditional =
        use_conditional &&
        (config.variant == Variant::full || config.variant == Variant::no_marginal);
    const bool want_target = want_marginal || want_conditional;
    const std::vector<std::size_t>& pseudo_labels = target_pseudo_labels;

    ForwardTrace trace_s = forward(params, source_features, ForwardMode::train, latent_layer);
    std::optional<ForwardTrace> trace_t;
    if (want_target)
        trace_t = forward(params, target_features, ForwardMode::train, latent_layer);

    EpochReport report;
    report.l_s = cross_entropy(trace_s.logits, source_labels);
    Matrix d_logits_s = cross_entropy_grad(trace_s.logits, source_labels);

    Matrix grad_latent_s(trace_s.latent.rows(), trace_s.latent.cols());
    Matrix grad_latent_t;
    if (trace_t) grad_latent_t = Matrix(trace_t->latent.rows(), trace_t->latent.cols());

    if (want_marginal) {
        const double w = 1.0 - config.alpha;
        LatentSplit split_s = split_latent(trace_s.latent, config.independent_dim);
        LatentSplit split_t = split_latent(trace_t->latent, config.independent_dim);
        LineFit fit_s = fit_line(split_s, /*regularize=*/true);
        LineFit fit_t = fit_line(split_t, /*regularize=*/true);
        MarginalLossTerms ml = marginal_loss(fit_s, fit_t, config.gamma, config.slope_term);
        report.l_m = ml.loss;
        report.diagnostics.theta_M = ml.theta_M;
        report.diagnostics.B_M = ml.B_M;

        grad_latent_s += fit_line_backward(split_s, ml.grad_source.d_slope,
                                           ml.grad_source.d_intercept, /*regularize=*/true);
        grad_latent_s *= w;
        Matrix g_t = fit_line_backward(split_t, ml.grad_target.d_slope, ml.grad_target.d_intercept,
                                       /*regularize=*/true);
        g_t *= w;
        grad_latent_t += g_t;
    }

    if (want_conditional) {
        ClassFits fits_s = fit_line_per_class(trace_s.latent, source_labels, num_classes,
                                              config.independent_dim, config.min_class_samples);
        ClassFits fits_t = fit_line_per_class(trace_t->latent, pseudo_labels, num_classes,
                                              config.independent_dim, config.min_class_samples);
        ConditionalLossTerms cl =
            conditional_loss(fits_s, fits_t, config.gamma, num_classes, config.slope_term);
        report.l_c = cl.loss;
        for (std::size_t c : cl.active_classes) {
            report.diagnostics.theta_C[c] = cl.theta_C[c];
            report.diagnostics.B_C[c] = cl.B_C[c];
        }

        const auto rows_s = detail::rows_by_class(source_labels, num_classes);
        const auto rows_t = detail::rows_by_class(pseudo_labels, num_classes);
        for (std::size_t c : cl.active_classes) {
            LatentSplit cs =
                split_latent(select_rows(trace_s.latent, rows_s[c]), config.independent_dim);
            LatentSplit ct =
                split_latent(select_rows(trace_t->latent, rows_t[c]), config.independent_dim);
            Matrix gs = fit_line_backward(cs, cl.grad_source[c].d_slope,
                                          cl.grad_source[c].d_intercept);
            Matrix gt = fit_line_backward(ct, cl.grad_target[c].d_slope,
                                          cl.grad_target[c].d_intercept);
            detail::scatter_class_gradient(grad_latent_s, gs, rows_s[c], config.alpha);
            detail::scatter_class_gradient(grad_latent_t, gt, rows_t[c], config.alpha);
        }
    }

    report.total =
        total_objective(report.l_s, report.l_m, report.l_c, config.alpha);
    if (!std::isfinite(report.total))
        throw NumericError("train_step: non-finite total loss");

    GradientSet grads = backward(trace_s, grad_latent_s, d_logits_s, params);
    if (trace_t) {
        Matrix zero_logits(trace_t->logits.rows(), trace_t->logits.cols());
        grads += backward(*trace_t, grad_latent_t, zero_logits, params);
    }
    return {std::move(report), std::move(grads)};
}

/// One optimization step on one source/target mini-batch pair. Returns the
/// loss breakdown; parameters are updated in place. Pseudo-labels come from
/// the classifier as it stood before this step.
inline EpochReport train_step(MlpParams& params, const Matrix& source_features,
                              const std::vector<std::size_t>& source_labels,
                              const Matrix& target_features, std::size_t num_classes,
                              const TrainConfig& config, bool use_conditional) {
    std::vector<std::size_t> pseudo_labels(target_features.rows(), 0);
    const bool want_conditional =
        use_conditional &&
        (config.variant == Variant::full || config.variant == Variant::no_marginal);
    if (want_conditional)
        pseudo_labels =
            generate_pseudo_labels(params, target_features, config.resolved_latent_layer()).labels;

    auto [report, grads] =
        objective_gradients(params, source_features, source_labels, target_features,
                            pseudo_labels, num_classes, config, use_conditional);
    sgd_step(params, grads, config.learning_rate);
    return report;
}

/// Full-dataset alignment diagnostics (marginal and per-class fits), using
/// pseudo or true target labels. Angles are radians here; report writers
/// convert to degrees.
inline AlignmentDiagnostics compute_diagnostics(MlpParams& params, const LabeledDataset& source,
                                                const LabeledDataset& target,
                                                LabelSource label_source,
                                                const TrainConfig& config) {
    if (label_source == LabelSource::true_labels && !target.has_labels())
        throw EvaluationError("compute_diagnostics: true labels requested but target is unlabeled");
    if (!source.has_labels())
        throw EvaluationError("compute_diagnostics: source must be labeled");

    const std::size_t latent_layer = config.resolved_latent_layer();
    // Measure mode: each domain is normalized by its own full-dataset batch
    // statistics, matching how the alignment losses see the latent during
    // training, and leaving the running statistics untouched.
    ForwardTrace trace_s = forward(params, source.features, ForwardMode::measure, latent_layer);
    ForwardTrace trace_t = forward(params, target.features, ForwardMode::measure, latent_layer);

    AlignmentDiagnostics diag;
    diag.label_source = label_source;

    LineFit fit_s =
        fit_line(split_latent(trace_s.latent, config.independent_dim), /*regularize=*/true);
    LineFit fit_t =
        fit_line(split_latent(trace_t.latent, config.independent_dim), /*regularize=*/true);
    // A collapsed latent (e.g. every dependent unit dead on one domain) leaves
    // the angle undefined; report NaN rather than aborting the diagnostics.
    try {
        diag.theta_M = angle(fit_s.slope, fit_t.slope);
    } catch (const DegenerateSlopeError&) {
        diag.theta_M = std::numeric_limits<double>::quiet_NaN();
    }
    diag.B_M = intercept_diff(fit_s.intercept, fit_t.intercept);

    std::vector<std::size_t> target_labels =
        label_source == LabelSource::true_labels
            ? *target.labels
            : generate_pseudo_labels(params, target.features, latent_layer).labels;

    const std::size_t c_count = source.num_classes;
    ClassFits fits_s = fit_line_per_class(trace_s.latent, *source.labels, c_count,
                                          config.independent_dim, config.min_class_samples);
    ClassFits fits_t = fit_line_per_class(trace_t.latent, target_labels, c_count,
                                          config.independent_dim, config.min_class_samples);
    for (std::size_t c = 0; c < c_count; ++c) {
        if (!fits_s.fits[c] || !fits_t.fits[c]) continue;
        try {
            diag.theta_C[c] = angle(fits_s.fits[c]->slope, fits_t.fits[c]->slope);
        } catch (const DegenerateSlopeError&) {
            continue;
        }
        diag.B_C[c] = intercept_diff(fits_s.fits[c]->intercept, fits_t.fits[c]->intercept);
    }
    return diag;
}

namespace detail {

/// Cycles deterministic shuffled batches over one domain, reshuffling each
/// epoch from (seed, epoch).
class BatchCycler {
public:
    BatchCycler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
        : n_(n), batch_size_(batch_size), seed_(seed) {
        refill();
    }

    std::vector<std::size_t> next() {
        if (queue_.empty()) refill();
        std::vector<std::size_t> batch = std::move(queue_.front());
        queue_.pop_front();
        return batch;
    }

private:
    void refill() {
        for (auto& b : batch_iterator(n_, batch_size_, seed_, epoch_)) queue_.push_back(std::move(b));
        ++epoch_;
        if (queue_.empty())
            throw InsufficientSamplesError("BatchCycler: dataset yields no usable batches");
    }

    std::size_t n_, batch_size_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::deque<std::vector<std::size_t>> queue_;
};

}  // namespace detail

struct TrainResult {
    MlpParams params;
    std::vector<EpochReport> reports;
};

/// Optional per-step observer (checkpoint cadence, progress logging).
using StepObserver = std::function<void(const EpochReport&, const MlpParams&)>;

inline MlpParams make_network(const TrainConfig& config, std::size_t input_dim,
                              std::size_t num_classes) {
    std::vector<std::size_t> sizes;
    sizes.push_back(input_dim);
    for (std::size_t h : config.hidden_sizes) sizes.push_back(h);
    sizes.push_back(num_classes);
    return make_mlp(sizes, config.seed, config.use_batchnorm);
}

/// The training procedure: warmup on classification + marginal alignment,
/// then pseudo-labels regenerated every step with conditional alignment
/// added, until the iteration budget or a 20-step loss plateau.
inline TrainResult run_training(const LabeledDataset& source, const LabeledDataset& target,
                                const TrainConfig& config, const StepObserver& observer = {}) {
    config.validate();
    if (source.size() == 0 || target.size() == 0)
        throw EmptyInputError("run_training: empty dataset");
    if (!source.has_labels()) throw EvaluationError("run_training: source must be labeled");
    if (source.features.cols() != target.features.cols())
        throw ShapeError("run_training: feature dimension mismatch between domains");

    TrainResult result;
    result.params = make_network(config, source.features.cols(), source.num_classes);
    if (config.iterations == 0) return result;

    const std::size_t latent_layer = config.resolved_latent_layer();
    detail::BatchCycler source_batches(source.size(), config.batch_size, config.seed);
    detail::BatchCycler target_batches(target.size(), config.batch_size,
                                       config.seed ^ 0x7f4a7c159e3779b9ull);

    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t steps_since_improvement = 0;
    for (std::size_t step = 0; step < config.iterations; ++step) {
        const auto s_rows = source_batches.next();
        const auto t_rows = target_batches.next();
        Matrix s_feat = select_rows(source.features, s_rows);
        Matrix t_feat = select_rows(target.features, t_rows);
        std::vector<std::size_t> s_labels(s_rows.size());
        for (std::size_t i = 0; i < s_rows.size(); ++i) s_labels[i] = (*source.labels)[s_rows[i]];

        const bool use_conditional = step >= config.warmup_iterations;
        EpochReport report;
        try {
            report = train_step(result.params, s_feat, s_labels, t_feat, source.num_classes,
                                config, use_conditional);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
        }
        report.step = step;
        report.diagnostics.step = step;
        if (target.has_labels())
            report.target_accuracy = evaluate(result.params, target, latent_layer);

        const double total = report.total;
        if (observer) observer(report, result.params);
        result.reports.push_back(std::move(report));

        // Plateau detection: stop once the best total seen has not improved
        // by 1e-6 within 20 steps. The count restarts at warmup end, where the
        // conditional term joins the objective and shifts its scale.
        if (step + 1 == config.warmup_iterations) {
            best_loss = std::numeric_limits<double>::infinity();
            steps_since_improvement = 0;
        } else if (total < best_loss - 1e-6) {
            best_loss = total;
            steps_since_improvement = 0;
        } else if (++steps_since_improvement >= 20) {
            break;
        }
    }
    return result;
}

}  // namespace dlsa

#endif  // DLSA_TRAINER_HPP

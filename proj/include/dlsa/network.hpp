#ifndef DLSA_NETWORK_HPP
#define DLSA_NETWORK_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dlsa/errors.hpp"
#include "dlsa/matrix.hpp"

namespace dlsa {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

enum class Activation { relu, identity };
/// train: batch statistics, running stats updated. eval: running statistics.
/// measure: batch statistics without touching running stats — used to observe
/// the latent geometry exactly as the training objective normalizes it.
enum class ForwardMode { train, eval, measure };

struct BatchNormState {
    Vector running_mean;
    Vector running_var;
    Vector scale;   // gamma
    Vector shift;   // beta
};

struct Layer {
    Matrix weights;   // in x out
    Vector biases;    // out
    bool use_batchnorm = false;
    BatchNormState bn;

    std::size_t in_dim() const { return weights.rows(); }
    std::size_t out_dim() const { return weights.cols(); }
};

/// The full differentiable model: feature extractor layers followed by the
/// classifier layer. Hidden layers get the configured activation; the last
/// layer emits raw logits.
struct MlpParams {
    std::vector<Layer> layers;
    Activation activation = Activation::relu;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
};

/// Glorot-uniform initialized network. sizes = {input, hidden..., classes}.
/// Batch norm goes on every hidden layer when enabled, never on the logits.
inline MlpParams make_mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed,
                          bool batchnorm = true, Activation act = Activation::relu) {
    if (sizes.size() < 2) throw ConfigError("make_mlp: need at least input and output sizes");
    std::mt19937_64 rng(seed);
    MlpParams params;
    params.activation = act;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Layer layer;
        const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        layer.weights = Matrix(fan_in, fan_out);
        for (double& w : layer.weights.data()) w = dist(rng);
        const bool hidden = l + 2 < sizes.size();
        layer.use_batchnorm = batchnorm && hidden;
        // A bias before batch norm is redundant: the normalization removes it
        // and the shift parameter takes its place.
        if (!layer.use_batchnorm) layer.biases.assign(fan_out, 0.0);
        if (layer.use_batchnorm) {
            layer.bn.running_mean.assign(fan_out, 0.0);
            layer.bn.running_var.assign(fan_out, 1.0);
            layer.bn.scale.assign(fan_out, 1.0);
            layer.bn.shift.assign(fan_out, 0.0);
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

struct LayerTrace {
    Matrix linear_out;   // x W + b
    Matrix bn_xhat;      // normalized pre-scale values (batchnorm layers only)
    Vector norm_mean;    // statistics used for normalization
    Vector norm_var;
    Matrix activated;    // layer output
};

struct ForwardTrace {
    Matrix input;
    std::vector<LayerTrace> layers;
    Matrix latent;   // output of the designated alignment layer
    Matrix logits;
    std::size_t latent_layer = 0;
    ForwardMode mode = ForwardMode::eval;
};

/// Default alignment latent: the penultimate layer's output.
inline std::size_t default_latent_layer(const MlpParams& params) {
    return params.layers.size() >= 2 ? params.layers.size() - 2 : 0;
}

inline ForwardTrace forward(MlpParams& params, const Matrix& input, ForwardMode mode,
                            std::size_t latent_layer) {
    if (params.layers.empty()) throw ConfigError("forward: no layers");
    if (input.cols() != params.input_dim())
        throw ShapeError("forward: input cols " + std::to_string(input.cols()) +
                         " != first-layer input dim " + std::to_string(params.input_dim()));
    if (latent_layer >= params.layers.size())
        throw IndexError("forward: latent_layer out of range");

    const std::size_t n = input.rows();
    ForwardTrace trace;
    trace.input = input;
    trace.latent_layer = latent_layer;
    trace.mode = mode;

    const Matrix* x = &trace.input;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Layer& layer = params.layers[l];
        LayerTrace lt;
        lt.linear_out = matmul(*x, layer.weights);
        if (!layer.biases.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < layer.out_dim(); ++j)
                    lt.linear_out(i, j) += layer.biases[j];

        Matrix pre_act = lt.linear_out;
        if (layer.use_batchnorm) {
            const std::size_t d = layer.out_dim();
            if (mode != ForwardMode::eval) {
                lt.norm_mean = column_mean(lt.linear_out);
                lt.norm_var.assign(d, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        const double c = lt.linear_out(i, j) - lt.norm_mean[j];
                        lt.norm_var[j] += c * c;
                    }
                for (double& v : lt.norm_var) v /= static_cast<double>(n);
                if (mode == ForwardMode::train) {
                    for (std::size_t j = 0; j < d; ++j) {
                        layer.bn.running_mean[j] =
                            (1.0 - kBatchNormMomentum) * layer.bn.running_mean[j] +
                            kBatchNormMomentum * lt.norm_mean[j];
                        layer.bn.running_var[j] =
                            (1.0 - kBatchNormMomentum) * layer.bn.running_var[j] +
                            kBatchNormMomentum * lt.norm_var[j];
                    }
                }
            } else {
                lt.norm_mean = layer.bn.running_mean;
                lt.norm_var = layer.bn.running_var;
            }
            lt.bn_xhat = Matrix(n, d);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    lt.bn_xhat(i, j) =
                        (lt.linear_out(i, j) - lt.norm_mean[j]) / std::sqrt(lt.norm_var[j] + kBatchNormEps);
                    pre_act(i, j) = layer.bn.scale[j] * lt.bn_xhat(i, j) + layer.bn.shift[j];
                }
        }

        const bool is_logits = l + 1 == params.layers.size();
        lt.activated = pre_act;
        if (!is_logits && params.activation == Activation::relu) {
            for (double& v : lt.activated.data())
                if (v < 0.0) v = 0.0;
        }
        trace.layers.push_back(std::move(lt));
        x = &trace.layers.back().activated;
    }

    trace.latent = trace.layers[latent_layer].activated;
    trace.logits = trace.layers.back().activated;
    if (trace.latent.cols() < 2)
        throw DimensionalityError("forward: latent dimension must be >= 2");
    return trace;
}

/// Row-wise softmax with max-subtraction.
inline Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            out(i, j) = std::exp(logits(i, j) - mx);
            sum += out(i, j);
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

inline double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& labels) {
    if (labels.size() != logits.rows()) throw ShapeError("cross_entropy: labels length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (labels[i] >= logits.cols()) throw LabelError("cross_entropy: label out of range");
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(logits(i, j) - mx);
        loss += std::log(sum) - (logits(i, labels[i]) - mx);
    }
    return loss / static_cast<double>(logits.rows());
}

/// Gradient of mean cross-entropy w.r.t. the logits: (softmax - onehot)/N.
inline Matrix cross_entropy_grad(const Matrix& logits, const std::vector<std::size_t>& labels) {
    if (labels.size() != logits.rows())
        throw ShapeError("cross_entropy_grad: labels length mismatch");
    Matrix grad = softmax(logits);
    const double inv_n = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (labels[i] >= logits.cols()) throw LabelError("cross_entropy_grad: label out of range");
        grad(i, labels[i]) -= 1.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) grad(i, j) *= inv_n;
    }
    return grad;
}

struct LayerGradient {
    Matrix d_weights;
    Vector d_biases;
    Vector d_scale;   // batchnorm layers only
    Vector d_shift;
};

struct GradientSet {
    std::vector<LayerGradient> layers;

    GradientSet& operator+=(const GradientSet& o) {
        if (layers.size() != o.layers.size()) throw ShapeError("GradientSet +=: layer mismatch");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].d_weights += o.layers[l].d_weights;
            for (std::size_t i = 0; i < layers[l].d_biases.size(); ++i)
                layers[l].d_biases[i] += o.layers[l].d_biases[i];
            for (std::size_t i = 0; i < layers[l].d_scale.size(); ++i)
                layers[l].d_scale[i] += o.layers[l].d_scale[i];
            for (std::size_t i = 0; i < layers[l].d_shift.size(); ++i)
                layers[l].d_shift[i] += o.layers[l].d_shift[i];
        }
        return *this;
    }
};

inline GradientSet zero_gradients(const MlpParams& params) {
    GradientSet g;
    for (const Layer& layer : params.layers) {
        LayerGradient lg;
        lg.d_weights = Matrix(layer.in_dim(), layer.out_dim());
        lg.d_biases.assign(layer.biases.size(), 0.0);
        if (layer.use_batchnorm) {
            lg.d_scale.assign(layer.out_dim(), 0.0);
            lg.d_shift.assign(layer.out_dim(), 0.0);
        }
        g.layers.push_back(std::move(lg));
    }
    return g;
}

/// Reverse-mode gradients of any scalar whose latent- and logit-gradients are
/// the given upstreams, w.r.t. every parameter. Both upstream paths may be
/// active at once (alignment losses through the latent, classification loss
/// through the logits).
inline GradientSet backward(const ForwardTrace& trace, const Matrix& upstream_latent_grad,
                            const Matrix& upstream_logit_grad, const MlpParams& params) {
    if (!upstream_latent_grad.same_shape(trace.latent))
        throw ShapeError("backward: latent upstream shape mismatch");
    if (!upstream_logit_grad.same_shape(trace.logits))
        throw ShapeError("backward: logit upstream shape mismatch");

    const std::size_t n = trace.input.rows();
    GradientSet grads = zero_gradients(params);

    Matrix d_act = upstream_logit_grad;
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const Layer& layer = params.layers[li];
        const LayerTrace& lt = trace.layers[li];
        if (li == trace.latent_layer) d_act += upstream_latent_grad;

        // Activation: last layer is identity; hidden layers may be relu.
        Matrix d_pre = d_act;
        const bool is_logits = li + 1 == params.layers.size();
        if (!is_logits && params.activation == Activation::relu) {
            for (std::size_t i = 0; i < d_pre.size(); ++i)
                if (lt.activated.data()[i] <= 0.0) d_pre.data()[i] = 0.0;
        }

        Matrix d_linear = d_pre;
        if (layer.use_batchnorm) {
            const std::size_t d = layer.out_dim();
            LayerGradient& lg = grads.layers[li];
            Vector sum_dxhat(d, 0.0), sum_dxhat_xhat(d, 0.0);
            Matrix dxhat(n, d);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    lg.d_scale[j] += d_pre(i, j) * lt.bn_xhat(i, j);
                    lg.d_shift[j] += d_pre(i, j);
                    dxhat(i, j) = d_pre(i, j) * layer.bn.scale[j];
                    sum_dxhat[j] += dxhat(i, j);
                    sum_dxhat_xhat[j] += dxhat(i, j) * lt.bn_xhat(i, j);
                }
            for (std::size_t j = 0; j < d; ++j) {
                const double inv_std = 1.0 / std::sqrt(lt.norm_var[j] + kBatchNormEps);
                if (trace.mode != ForwardMode::eval) {
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i)
                        d_linear(i, j) = inv_std * (dxhat(i, j) - inv_n * sum_dxhat[j] -
                                                    lt.bn_xhat(i, j) * inv_n * sum_dxhat_xhat[j]);
                } else {
                    for (std::size_t i = 0; i < n; ++i) d_linear(i, j) = dxhat(i, j) * inv_std;
                }
            }
        }

        const Matrix& layer_input = li == 0 ? trace.input : trace.layers[li - 1].activated;
        LayerGradient& lg = grads.layers[li];
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < layer.in_dim(); ++k) {
                const double xv = layer_input(i, k);
                for (std::size_t j = 0; j < layer.out_dim(); ++j)
                    lg.d_weights(k, j) += xv * d_linear(i, j);
            }
        if (!lg.d_biases.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < layer.out_dim(); ++j) lg.d_biases[j] += d_linear(i, j);

        if (li > 0) {
            Matrix d_input(n, layer.in_dim());
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < layer.out_dim(); ++j) {
                    const double dv = d_linear(i, j);
                    for (std::size_t k = 0; k < layer.in_dim(); ++k)
                        d_input(i, k) += dv * layer.weights(k, j);
                }
            d_act = std::move(d_input);
        }
    }
    return grads;
}

/// params - lr * grads; batch-norm running statistics untouched.
inline void sgd_step(MlpParams& params, const GradientSet& grads, double lr) {
    if (grads.layers.size() != params.layers.size())
        throw ShapeError("sgd_step: layer count mismatch");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Layer& layer = params.layers[l];
        const LayerGradient& lg = grads.layers[l];
        if (!lg.d_weights.same_shape(layer.weights))
            throw ShapeError("sgd_step: weight shape mismatch");
        for (std::size_t i = 0; i < layer.weights.size(); ++i)
            layer.weights.data()[i] -= lr * lg.d_weights.data()[i];
        for (std::size_t i = 0; i < layer.biases.size(); ++i) layer.biases[i] -= lr * lg.d_biases[i];
        if (layer.use_batchnorm) {
            for (std::size_t i = 0; i < layer.bn.scale.size(); ++i) {
                layer.bn.scale[i] -= lr * lg.d_scale[i];
                layer.bn.shift[i] -= lr * lg.d_shift[i];
            }
        }
    }
}

}  // namespace dlsa

#endif  // DLSA_NETWORK_HPP

#ifndef DLSA_CHECKPOINT_HPP
#define DLSA_CHECKPOINT_HPP

#include <fstream>
#include <sstream>
#include <string>

#include "dlsa/data.hpp"
#include "dlsa/errors.hpp"
#include "dlsa/network.hpp"

namespace dlsa {

inline constexpr const char* kCheckpointMagic = "DLSA1";

/// Versioned textual checkpoint: magic header, config hash, then per layer
/// the shapes and all parameters (17 significant digits) including batch-norm
/// running statistics.
inline void save_checkpoint(const MlpParams& params, std::uint64_t config_hash,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_checkpoint: cannot open " + path + " for writing");
    out << kCheckpointMagic << '\n';
    out << "config_hash " << config_hash << '\n';
    out << "activation " << (params.activation == Activation::relu ? "relu" : "identity") << '\n';
    out << "layers " << params.layers.size() << '\n';
    auto write_vec = [&](const Vector& v) {
        for (std::size_t i = 0; i < v.size(); ++i)
            out << (i ? " " : "") << detail::format_double(v[i]);
        out << '\n';
    };
    for (const Layer& layer : params.layers) {
        out << "layer " << layer.in_dim() << ' ' << layer.out_dim() << ' '
            << (layer.use_batchnorm ? 1 : 0) << '\n';
        write_vec(layer.weights.data());
        if (!layer.use_batchnorm) write_vec(layer.biases);
        if (layer.use_batchnorm) {
            write_vec(layer.bn.running_mean);
            write_vec(layer.bn.running_var);
            write_vec(layer.bn.scale);
            write_vec(layer.bn.shift);
        }
    }
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

struct Checkpoint {
    MlpParams params;
    std::uint64_t config_hash = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    std::string magic;
    if (!std::getline(in, magic) || magic != kCheckpointMagic)
        throw ParseError("load_checkpoint: bad magic in " + path);

    Checkpoint ckpt;
    std::string key;
    in >> key >> ckpt.config_hash;
    if (key != "config_hash") throw ParseError("load_checkpoint: expected config_hash");
    std::string act;
    in >> key >> act;
    if (key != "activation") throw ParseError("load_checkpoint: expected activation");
    ckpt.params.activation = act == "relu" ? Activation::relu : Activation::identity;
    std::size_t n_layers;
    in >> key >> n_layers;
    if (key != "layers") throw ParseError("load_checkpoint: expected layers");

    auto read_vec = [&](Vector& v, std::size_t n) {
        v.resize(n);
        for (double& x : v)
            if (!(in >> x)) throw ParseError("load_checkpoint: truncated parameter block");
    };
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t in_dim, out_dim;
        int bn;
        in >> key >> in_dim >> out_dim >> bn;
        if (key != "layer") throw ParseError("load_checkpoint: expected layer header");
        Layer layer;
        Vector w;
        read_vec(w, in_dim * out_dim);
        layer.weights = Matrix(in_dim, out_dim, std::move(w));
        layer.use_batchnorm = bn != 0;
        if (!layer.use_batchnorm) read_vec(layer.biases, out_dim);
        if (layer.use_batchnorm) {
            read_vec(layer.bn.running_mean, out_dim);
            read_vec(layer.bn.running_var, out_dim);
            read_vec(layer.bn.scale, out_dim);
            read_vec(layer.bn.shift, out_dim);
        }
        ckpt.params.layers.push_back(std::move(layer));
    }
    return ckpt;
}

}  // namespace dlsa

#endif  // DLSA_CHECKPOINT_HPP

// Command-line front end: synthetic data generation, DLSA training,
// checkpoint evaluation, and ablation sweeps with CSV reports.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dlsa/checkpoint.hpp"
#include "dlsa/data.hpp"
#include "dlsa/trainer.hpp"

namespace fs = std::filesystem;
using namespace dlsa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct GenFlags {
    std::size_t classes = 3;
    std::size_t per_class = 200;
    std::size_t dim = 8;
    double rotation = 45.0;
    double translate = 3.0;
    double class_std = 0.5;
    std::uint64_t seed = 0;

    ShiftSpec to_spec() const {
        ShiftSpec spec;
        spec.num_classes = classes;
        spec.samples_per_class = per_class;
        spec.input_dim = dim;
        spec.rotation_degrees = rotation;
        spec.translation = Vector(dim, translate);
        spec.class_std = class_std;
        spec.seed = seed;
        return spec;
    }
};

struct TrainFlags {
    std::string source_path, target_path;
    bool synthetic = false;
    GenFlags gen;
    std::string out_dir = "runs/out";
    TrainConfig config;
    std::string variant = "full";
    std::string slope_term = "angle";
    std::string hidden = "64,8";
    bool no_batchnorm = false;
    long long latent_layer = -1;
    std::size_t checkpoint_every = 0;   // 0 = final checkpoint only
    bool quiet = false;
};

void add_gen_flags(CLI::App* cmd, GenFlags& flags) {
    cmd->add_option("--classes", flags.classes, "Number of classes");
    cmd->add_option("--per-class", flags.per_class, "Samples per class");
    cmd->add_option("--dim", flags.dim, "Feature dimension");
    cmd->add_option("--rotation", flags.rotation, "Target rotation in degrees");
    cmd->add_option("--translate", flags.translate, "Target translation per dimension");
    cmd->add_option("--std", flags.class_std, "Per-class Gaussian std");
}

std::vector<std::size_t> parse_hidden(const std::string& hidden) {
    std::vector<std::size_t> sizes;
    std::stringstream ss(hidden);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const long v = std::stol(tok);
        if (v < 2) throw ConfigError("hidden layer sizes must be >= 2");
        sizes.push_back(static_cast<std::size_t>(v));
    }
    if (sizes.empty()) throw ConfigError("--hidden needs at least one layer size");
    return sizes;
}

TrainConfig resolve_config(TrainFlags& flags, std::uint64_t seed_override) {
    TrainConfig config = flags.config;
    config.seed = seed_override;
    config.hidden_sizes = parse_hidden(flags.hidden);
    config.use_batchnorm = !flags.no_batchnorm;
    if (flags.latent_layer >= 0)
        config.latent_layer = static_cast<std::size_t>(flags.latent_layer);
    if (flags.variant == "full") config.variant = Variant::full;
    else if (flags.variant == "no_conditional") config.variant = Variant::no_conditional;
    else if (flags.variant == "no_marginal") config.variant = Variant::no_marginal;
    else if (flags.variant == "source_only") config.variant = Variant::source_only;
    else throw ConfigError("unknown variant '" + flags.variant + "'");
    if (flags.slope_term == "angle") config.slope_term = SlopeTerm::angle;
    else if (flags.slope_term == "squared") config.slope_term = SlopeTerm::squared_diff;
    else throw ConfigError("unknown slope term '" + flags.slope_term + "'");
    config.validate();
    return config;
}

std::uint64_t config_hash(const TrainConfig& c) {
    std::ostringstream os;
    os << c.alpha << '|' << c.gamma << '|' << c.learning_rate << '|' << c.batch_size << '|'
       << c.iterations << '|' << c.warmup_iterations << '|' << c.seed << '|'
       << variant_name(c.variant) << '|' << c.independent_dim << '|'
       << c.resolved_latent_layer() << '|' << c.min_class_samples << '|' << c.use_batchnorm;
    for (std::size_t h : c.hidden_sizes) os << '|' << h;
    return std::hash<std::string>{}(os.str());
}

std::pair<LabeledDataset, LabeledDataset> load_domains(const TrainFlags& flags) {
    if (flags.synthetic) return generate_shifted_pair(flags.gen.to_spec());
    LabeledDataset source = load_feature_csv(flags.source_path, /*has_labels=*/true);
    LabeledDataset target_labeled;
    bool target_has_labels = true;
    try {
        target_labeled = load_feature_csv(flags.target_path, /*has_labels=*/true,
                                          source.num_classes);
    } catch (const ParseError&) {
        target_has_labels = false;
    }
    if (target_has_labels && target_labeled.features.cols() == source.features.cols())
        return {std::move(source), std::move(target_labeled)};
    LabeledDataset target =
        load_feature_csv(flags.target_path, /*has_labels=*/false, source.num_classes);
    return {std::move(source), std::move(target)};
}

void write_manifest(const fs::path& path, const GenFlags& flags) {
    std::ofstream out(path);
    out << "format=DLSA1\n";
    out << "classes=" << flags.classes << '\n';
    out << "per_class=" << flags.per_class << '\n';
    out << "dim=" << flags.dim << '\n';
    out << "rotation=" << flags.rotation << '\n';
    out << "translate=" << flags.translate << '\n';
    out << "std=" << flags.class_std << '\n';
    out << "seed=" << flags.seed << '\n';
    if (!out) throw IoError("cannot write manifest " + path.string());
}

void write_report_csv(const fs::path& path, const std::vector<EpochReport>& reports,
                      bool with_accuracy) {
    std::ofstream out(path);
    out << "step,L_S,L_M,L_C,total,theta_M_rad,B_M,mean_theta_C_rad,mean_B_C";
    if (with_accuracy) out << ",target_accuracy";
    out << '\n';
    for (const EpochReport& r : reports) {
        out << r.step << ',' << detail::format_double(r.l_s) << ','
            << detail::format_double(r.l_m) << ',' << detail::format_double(r.l_c) << ','
            << detail::format_double(r.total) << ','
            << detail::format_double(r.diagnostics.theta_M) << ','
            << detail::format_double(r.diagnostics.B_M) << ','
            << detail::format_double(r.diagnostics.mean_theta_C()) << ','
            << detail::format_double(r.diagnostics.mean_B_C());
        if (with_accuracy) out << ',' << detail::format_double(r.target_accuracy.value_or(0.0));
        out << '\n';
    }
    if (!out) throw IoError("cannot write report " + path.string());
}

void write_diagnostics_rows(std::ofstream& out, const AlignmentDiagnostics& diag,
                            const std::string& label_source) {
    out << label_source << ",marginal," << detail::format_double(diag.theta_M * kRadToDeg) << ','
        << detail::format_double(diag.B_M) << '\n';
    for (const auto& [c, theta] : diag.theta_C)
        out << label_source << ',' << c << ',' << detail::format_double(theta * kRadToDeg) << ','
            << detail::format_double(diag.B_C.at(c)) << '\n';
    out << label_source << ",average," << detail::format_double(diag.mean_theta_C() * kRadToDeg)
        << ',' << detail::format_double(diag.mean_B_C()) << '\n';
}

int cmd_gen_data(const GenFlags& flags, const std::string& out_dir) {
    ShiftSpec spec = flags.to_spec();
    auto [source, target] = generate_shifted_pair(spec);
    fs::create_directories(out_dir);
    save_feature_csv(source, (fs::path(out_dir) / "source.csv").string());
    save_feature_csv(target, (fs::path(out_dir) / "target.csv").string());
    write_manifest(fs::path(out_dir) / "manifest.txt", flags);
    std::cout << "wrote " << source.size() << " source and " << target.size()
              << " target rows to " << out_dir << '\n';
    return kExitOk;
}

int cmd_train(TrainFlags& flags) {
    TrainConfig config = resolve_config(flags, flags.config.seed);
    auto [source, target] = load_domains(flags);
    fs::create_directories(flags.out_dir);

    StepObserver observer;
    if (flags.checkpoint_every > 0) {
        observer = [&](const EpochReport& report, const MlpParams& params) {
            if ((report.step + 1) % flags.checkpoint_every == 0)
                save_checkpoint(params, config_hash(config),
                                (fs::path(flags.out_dir) /
                                 ("model_step" + std::to_string(report.step + 1) + ".ckpt"))
                                    .string());
        };
    }
    TrainResult result = run_training(source, target, config, observer);
    write_report_csv(fs::path(flags.out_dir) / "report.csv", result.reports,
                     target.has_labels());
    save_checkpoint(result.params, config_hash(config),
                    (fs::path(flags.out_dir) / "model.ckpt").string());

    std::ofstream diag_out(fs::path(flags.out_dir) / "diagnostics.csv");
    diag_out << "label_source,class,theta_deg,B\n";
    AlignmentDiagnostics pseudo =
        compute_diagnostics(result.params, source, target, LabelSource::pseudo, config);
    write_diagnostics_rows(diag_out, pseudo, "pseudo");
    if (target.has_labels()) {
        AlignmentDiagnostics truth =
            compute_diagnostics(result.params, source, target, LabelSource::true_labels, config);
        write_diagnostics_rows(diag_out, truth, "true");
    }
    if (!diag_out) throw IoError("cannot write diagnostics");

    if (!flags.quiet) {
        std::cout << "trained " << result.reports.size() << " steps, final total loss "
                  << (result.reports.empty() ? 0.0 : result.reports.back().total) << '\n';
        if (target.has_labels() && !result.reports.empty() &&
            result.reports.back().target_accuracy)
            std::cout << "target accuracy " << *result.reports.back().target_accuracy << '\n';
    }
    return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_path) {
    Checkpoint ckpt = load_checkpoint(model_path);
    LabeledDataset ds = load_feature_csv(data_path, /*has_labels=*/true);
    if (ds.features.cols() != ckpt.params.input_dim())
        throw ShapeError("dataset feature dim " + std::to_string(ds.features.cols()) +
                         " != model input dim " + std::to_string(ckpt.params.input_dim()));
    const double acc = evaluate(ckpt.params, ds, default_latent_layer(ckpt.params));
    std::printf("accuracy=%.4f\n", acc);
    return kExitOk;
}

int cmd_ablate(TrainFlags& flags, const std::vector<std::uint64_t>& seeds) {
    auto [source, target] = load_domains(flags);
    fs::create_directories(flags.out_dir);
    std::ofstream out(fs::path(flags.out_dir) / "ablation.csv");
    out << "variant,seed,target_accuracy\n";

    const std::vector<std::string> variants = {"full", "no_marginal", "no_conditional",
                                               "source_only"};
    for (const std::string& variant : variants) {
        double acc_sum = 0.0;
        for (std::uint64_t seed : seeds) {
            flags.variant = variant;
            TrainConfig config = resolve_config(flags, seed);
            TrainResult result = run_training(source, target, config);
            const double acc = target.has_labels()
                                   ? evaluate(result.params, target, config.resolved_latent_layer())
                                   : 0.0;
            acc_sum += acc;
            out << variant << ',' << seed << ',' << detail::format_double(acc) << '\n';
        }
        out << variant << ",mean," << detail::format_double(acc_sum / seeds.size()) << '\n';
    }
    if (!out) throw IoError("cannot write ablation.csv");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep least squares alignment for unsupervised domain adaptation"};
    app.require_subcommand(1);
    // Config files live on the root app: CLI11 only processes config files at
    // the top level. Subcommand options go in [train] / [ablate] sections;
    // fallthrough lets "--config" appear after the subcommand name.
    app.fallthrough();
    app.set_config("--config", "", "INI configuration file with [subcommand] sections");

    GenFlags gen_flags;
    std::string gen_out = "runs/data";
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic shifted domain pair");
    add_gen_flags(gen, gen_flags);
    gen->add_option("--seed", gen_flags.seed, "Master seed");
    gen->add_option("--out", gen_out, "Output directory");

    TrainFlags train_flags;
    std::vector<std::uint64_t> ablate_seeds = {0, 1, 2, 3, 4};

    auto add_train_flags = [&](CLI::App* cmd, bool with_seed) {
        cmd->add_option("--source", train_flags.source_path, "Labeled source CSV");
        cmd->add_option("--target", train_flags.target_path, "Target CSV (labels optional)");
        cmd->add_flag("--synthetic", train_flags.synthetic,
                      "Generate the domains instead of loading files");
        add_gen_flags(cmd, train_flags.gen);
        cmd->add_option("--alpha", train_flags.config.alpha,
                        "Conditional/marginal balance in [0,1]");
        cmd->add_option("--gamma", train_flags.config.gamma, "Intercept term weight");
        cmd->add_option("--lr", train_flags.config.learning_rate, "Learning rate");
        cmd->add_option("--batch", train_flags.config.batch_size, "Batch size");
        cmd->add_option("--iters", train_flags.config.iterations, "Iteration budget");
        cmd->add_option("--warmup", train_flags.config.warmup_iterations,
                        "Iterations before conditional loss activates");
        if (with_seed) cmd->add_option("--seed", train_flags.config.seed, "Master seed");
        cmd->add_option("--independent-dim", train_flags.config.independent_dim,
                        "Latent column used as the regression independent variable");
        cmd->add_option("--latent-layer", train_flags.latent_layer,
                        "Alignment layer index (default: last hidden layer)");
        cmd->add_option("--min-class-samples", train_flags.config.min_class_samples,
                        "Minimum samples for a per-class fit");
        cmd->add_option("--hidden", train_flags.hidden, "Comma-separated hidden layer sizes");
        cmd->add_flag("--no-batchnorm", train_flags.no_batchnorm, "Disable batch normalization");
        cmd->add_option("--slope-term", train_flags.slope_term,
                        "Slope alignment term: angle or squared");
        cmd->add_option("--checkpoint-every", train_flags.checkpoint_every,
                        "Also checkpoint every N steps (0 = final only)");
        cmd->add_flag("--quiet", train_flags.quiet, "Suppress progress output");
        cmd->add_option("--out", train_flags.out_dir, "Output directory");
    };

    CLI::App* train = app.add_subcommand("train", "Train DLSA on a source/target pair");
    add_train_flags(train, true);
    train->add_option("--variant", train_flags.variant,
                      "full, no_conditional, no_marginal, or source_only");

    std::string eval_model, eval_data;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled CSV");
    eval->add_option("--model", eval_model, "Checkpoint path")->required();
    eval->add_option("--data", eval_data, "Labeled dataset CSV")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "Run all four variants over several seeds");
    add_train_flags(ablate, false);
    ablate->add_option("--seeds", ablate_seeds, "Seeds for the sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            gen_flags.to_spec().validate();
            return cmd_gen_data(gen_flags, gen_out);
        }
        if (train->parsed()) {
            if (train_flags.synthetic == !train_flags.source_path.empty())
                throw ConfigError("set either --synthetic or --source/--target, not both");
            train_flags.gen.seed = train_flags.config.seed;
            return cmd_train(train_flags);
        }
        if (eval->parsed()) return cmd_eval(eval_model, eval_data);
        if (ablate->parsed()) {
            if (train_flags.synthetic == !train_flags.source_path.empty())
                throw ConfigError("set either --synthetic or --source/--target, not both");
            if (ablate_seeds.empty()) throw ConfigError("--seeds must not be empty");
            return cmd_ablate(train_flags, ablate_seeds);
        }
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitUsage;
}

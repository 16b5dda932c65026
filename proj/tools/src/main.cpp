#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bdg/errors.hpp"
#include "cli.hpp"

namespace bdg::cli {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Flag values shared across subcommands; flags override config keys.
struct Flags {
    std::string config_path;
    std::string output_dir;
    // task
    std::string kind;
    std::optional<int> classes, per_domain, dim;
    std::optional<double> rotation_deg, scale, noise;
    std::vector<double> translation, imbalance;
    std::optional<std::uint64_t> data_seed;
    // train
    std::optional<double> lambda, gamma;
    std::optional<std::uint64_t> seed;
    std::string variant;
    std::optional<std::size_t> iters, pretrain_iters, batch_size, eval_period;
    std::vector<std::uint64_t> seeds;
    std::size_t jobs = 1;
};

ExperimentConfig assemble(const Flags& f, bool need_task) {
    ExperimentConfig cfg;
    if (!f.config_path.empty()) {
        cfg = parse_config_file(f.config_path);
    } else if (!need_task) {
        throw ConfigError("this command needs --config");
    }
    if (!f.kind.empty()) cfg.task.kind = data::shift_kind_from(f.kind);
    if (f.classes) cfg.task.classes = *f.classes;
    if (f.per_domain) cfg.task.per_domain = *f.per_domain;
    if (f.dim) cfg.task.dim = *f.dim;
    if (f.rotation_deg) cfg.task.rotation = *f.rotation_deg * kPi / 180.0;
    if (!f.translation.empty()) cfg.task.translation = f.translation;
    if (f.scale) cfg.task.scale = *f.scale;
    if (f.noise) cfg.task.noise_sigma = *f.noise;
    if (!f.imbalance.empty()) cfg.task.imbalance = f.imbalance;
    if (f.data_seed) cfg.task.seed = *f.data_seed;
    if (f.lambda) cfg.train.lambda = *f.lambda;
    if (f.gamma) cfg.train.gamma = *f.gamma;
    if (f.seed) cfg.train.seed = *f.seed;
    if (!f.variant.empty()) cfg.train.variant = train::variant_from(f.variant);
    if (f.iters) cfg.train.iters = *f.iters;
    if (f.pretrain_iters) cfg.train.pretrain_iters = *f.pretrain_iters;
    if (f.batch_size) cfg.train.batch_size = *f.batch_size;
    if (f.eval_period) cfg.train.eval_period = *f.eval_period;
    if (!f.seeds.empty()) cfg.seeds = f.seeds;
    if (!f.output_dir.empty()) cfg.output_dir = f.output_dir;
    return cfg;
}

void add_task_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--kind", f.kind, "gaussian_ring or moons");
    cmd->add_option("--classes", f.classes, "class count");
    cmd->add_option("--per-domain", f.per_domain, "samples per domain");
    cmd->add_option("--dim", f.dim, "feature dimension");
    cmd->add_option("--rotation", f.rotation_deg, "target rotation in degrees");
    cmd->add_option("--translation", f.translation, "target translation vector")
        ->delimiter(',');
    cmd->add_option("--scale", f.scale, "target scale factor");
    cmd->add_option("--noise", f.noise, "gaussian noise sigma");
    cmd->add_option("--imbalance", f.imbalance, "per-class weights")->delimiter(',');
    cmd->add_option("--data-seed", f.data_seed, "dataset seed");
}

void add_train_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--lambda", f.lambda, "MMD weight");
    cmd->add_option("--gamma", f.gamma, "consistency weight");
    cmd->add_option("--seed", f.seed, "training seed");
    cmd->add_option("--variant", f.variant, "v1..v5 or bdg");
    cmd->add_option("--iters", f.iters, "main iterations");
    cmd->add_option("--pretrain-iters", f.pretrain_iters, "Step A iterations");
    cmd->add_option("--batch-size", f.batch_size, "batch size per domain");
    cmd->add_option("--eval-period", f.eval_period, "metrics row every N iterations");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"bi-directional generation domain adaptation lab"};
    app.require_subcommand(1);
    Flags f;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic domain pair");
    gen->add_option("--config", f.config_path, "experiment config JSON");
    gen->add_option("--output-dir", f.output_dir, "where source.csv/target.csv go");
    add_task_flags(gen, f);

    CLI::App* tr = app.add_subcommand("train", "one training run with metrics and checkpoint");
    tr->add_option("--config", f.config_path, "experiment config JSON")->required();
    tr->add_option("--output-dir", f.output_dir, "output directory");
    add_train_flags(tr, f);

    CLI::App* ab = app.add_subcommand("ablate", "run every variant over the seed list");
    ab->add_option("--config", f.config_path, "experiment config JSON")->required();
    ab->add_option("--output-dir", f.output_dir, "output directory");
    ab->add_option("--seeds", f.seeds, "seed list")->delimiter(',');
    ab->add_option("--jobs", f.jobs, "parallel worker slots");
    add_train_flags(ab, f);

    CLI::App* sw = app.add_subcommand("sweep", "sensitivity sweep over lambda or gamma");
    std::string param;
    std::vector<double> grid;
    sw->add_option("--config", f.config_path, "experiment config JSON")->required();
    sw->add_option("--param", param, "lambda or gamma")->required();
    sw->add_option("--grid", grid, "grid values")->delimiter(',');
    sw->add_option("--output-dir", f.output_dir, "output directory");
    sw->add_option("--seeds", f.seeds, "seed list")->delimiter(',');
    sw->add_option("--jobs", f.jobs, "parallel worker slots");
    add_train_flags(sw, f);

    CLI::App* ex = app.add_subcommand("export-embeddings",
                                      "dump C_s trunk activations for Xs/Ft/Fs/Xt");
    std::string ckpt, src_path, tgt_path, out_path = "embeddings.csv";
    ex->add_option("--checkpoint", ckpt, "checkpoint.json from train")->required();
    ex->add_option("--source", src_path, "source dataset csv")->required();
    ex->add_option("--target", tgt_path, "target dataset csv")->required();
    ex->add_option("--output", out_path, "output csv path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(assemble(f, true));
        if (tr->parsed()) return cmd_train(assemble(f, false));
        if (ab->parsed()) return cmd_ablate(assemble(f, false), f.jobs);
        if (sw->parsed()) return cmd_sweep(assemble(f, false), param, grid, f.jobs);
        if (ex->parsed()) return cmd_export_embeddings(ckpt, src_path, tgt_path, out_path);
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace bdg::cli

int main(int argc, char** argv) { return bdg::cli::run_cli(argc, argv); }

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bdg/data.hpp"
#include "bdg/training.hpp"
#include "json.hpp"

namespace bdg::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

struct DatasetPaths {
    std::string source;
    std::string target;
};

// JSON experiment file: task + train blocks mirroring the core configs, an
// output directory, a seed list for sweeps, and optionally explicit dataset
// paths instead of a generated task. Unknown keys are rejected at every
// level so a typo cannot silently fall back to a default.
struct ExperimentConfig {
    data::ShiftSpec task;
    bool has_task = true;
    train::TrainConfig train;
    std::string output_dir = "out";
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::optional<DatasetPaths> datasets;
};

ExperimentConfig parse_config_json(const nlohmann::json& doc);
ExperimentConfig parse_config_file(const std::string& path);

// BDG_OUTPUT_ROOT prefixes relative output directories.
std::string resolve_output_dir(const std::string& dir);

// Loads the configured dataset files or generates the synthetic pair.
std::pair<data::DomainDataset, data::DomainDataset> resolve_datasets(
    const ExperimentConfig& cfg);

struct TrainOutputs {
    std::string metrics_csv;
    std::string checkpoint;
    double final_accuracy = 0.0;
    double baseline_accuracy = 0.0;
};

int cmd_gen_data(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg, TrainOutputs* outputs = nullptr);
int cmd_ablate(const ExperimentConfig& cfg, std::size_t jobs = 1);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& param,
              std::vector<double> grid = {}, std::size_t jobs = 1);
int cmd_export_embeddings(const std::string& checkpoint_path, const std::string& source_path,
                          const std::string& target_path, const std::string& out_path);

// Writes one metrics row per eval period. Wall-clock timing is reported on
// stdout, never in the CSV, so identical configs give byte-identical files.
void write_metrics_csv(const std::string& path, const std::vector<train::MetricsRecord>& metrics);

// Full argv entry point used by main(); maps errors to exit codes.
int run_cli(int argc, const char* const* argv);

}  // namespace bdg::cli

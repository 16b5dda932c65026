#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bdg/data.hpp"
#include "bdg/losses.hpp"
#include "bdg/nn.hpp"

namespace bdg::train {

// Model/loss subsets for the ablation study. v1/v2 are single-direction
// (only G_t and one classifier); v3..v5 and bdg share the bi-directional
// structure with loss terms toggled.
enum class Variant { v1, v2, v3, v4, v5, bdg };

std::string to_string(Variant v);
Variant variant_from(const std::string& s);

struct TrainConfig {
    double lambda = 1.0;
    double gamma = 1.0;
    double classifier_lr = 5e-4;
    double classifier_momentum = 0.9;
    double generator_lr = 5e-4;
    std::size_t batch_size = 64;       // per domain
    std::size_t pretrain_iters = 500;  // N0
    std::size_t iters = 2000;          // N
    std::uint64_t seed = 1;
    Variant variant = Variant::bdg;
    std::size_t pseudo_refresh = 0;  // main-loop period; 0 disables
    std::size_t eval_period = 25;
    std::size_t hidden = 64;

    void validate() const;
};

struct MetricsRecord {
    std::size_t iteration = 0;
    double loss_gan_s = 0.0;
    double loss_gan_t = 0.0;
    double loss_mmd_s = 0.0;
    double loss_mmd_t = 0.0;
    double loss_con = 0.0;
    double target_acc = 0.0;     // C_s on raw X_t
    double secondary_acc = 0.0;  // C_t on F_s
    int skipped_classes = 0;
    double wall_ms = 0.0;  // kept out of the CSV so repeated runs stay byte-identical
};

struct RunResult {
    std::vector<MetricsRecord> metrics;
    double baseline_accuracy = 0.0;  // C_0 on raw X_t right after Step A
    double final_target_accuracy = 0.0;
    double pseudo_label_accuracy = 0.0;  // vs held-out target labels, when present
    std::size_t trained_params = 0;
};

struct TrainBatch {
    data::Batch source;
    data::Batch target;  // labels are pseudo labels
};

// Drives the three-step schedule: Step A pretrains C_0 and freezes pseudo
// labels; each main iteration runs one classifier step (B) and one generator
// step (C) on the same minibatch pair. Single-threaded and fully determined
// by (config, datasets).
class Trainer {
public:
    Trainer(const TrainConfig& config, data::DomainDataset source, data::DomainDataset target);

    // Step A: N0 SGD-momentum iterations of source cross-entropy on C_0,
    // then pseudo labels for every target sample (argmax, ties to the lowest
    // class id).
    void step_a_pretrain();

    // Step B: one SGD-momentum step on the classifiers; generators frozen.
    void step_b_classifiers(const TrainBatch& batch);

    // Step C: one Adam step on the generators; classifiers frozen.
    void step_c_generators(const TrainBatch& batch);

    TrainBatch draw_batch();

    // Full schedule; evaluates metrics every eval_period iterations plus the
    // final one.
    RunResult run();

    const TrainConfig& config() const { return config_; }
    bool single_direction() const;

    const nn::Classifier& c0() const { return c0_; }
    const nn::Classifier& cs() const { return cs_; }
    const nn::Classifier& ct() const { return ct_; }
    const nn::Generator& gs() const { return gs_; }
    const nn::Generator& gt() const { return gt_; }
    bool has_gs() const;
    bool has_ct() const;

    const std::vector<int>& pseudo_labels() const { return pseudo_labels_; }
    bool pretrained() const { return pretrained_; }
    std::size_t iteration() const { return iteration_; }

    double evaluate_target_accuracy() const;     // C_s on raw X_t
    double evaluate_baseline_accuracy() const;   // C_0 on raw X_t
    double evaluate_secondary_accuracy() const;  // C_t on F_s
    double evaluate_pseudo_accuracy() const;
    double evaluate_source_train_accuracy() const;  // C_0 on X_s

    // Loss terms on the full datasets with current parameters (no tracking).
    MetricsRecord eval_metrics(std::size_t iteration) const;

    std::size_t trained_param_count() const;
    std::vector<std::pair<std::string, ad::Tensor*>> named_params();

    // Effective loss weights after variant masking.
    double effective_lambda() const;
    double effective_gamma() const;

private:
    losses::BatchBundle eval_bundle(ad::Tape& tape) const;
    void refresh_pseudo_labels(const nn::Classifier& labeler);
    static double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

    TrainConfig config_;
    data::DomainDataset source_;
    data::DomainDataset target_;

    nn::Generator gs_, gt_;
    nn::Classifier c0_, cs_, ct_;

    nn::SgdMomentum pretrain_opt_;
    nn::SgdMomentum classifier_opt_;
    nn::Adam generator_opt_;

    std::unique_ptr<data::BatchSampler> pretrain_sampler_;
    std::unique_ptr<data::BatchSampler> source_sampler_;
    std::unique_ptr<data::BatchSampler> target_sampler_;
    Rng sampler_seed_rng_;

    std::vector<int> pseudo_labels_;
    bool pretrained_ = false;
    std::size_t iteration_ = 0;
};

// Convenience wrappers mirroring the operation-level interface.
RunResult run(const TrainConfig& config, data::DomainDataset source, data::DomainDataset target);
RunResult run_variant(TrainConfig config, Variant variant, data::DomainDataset source,
                      data::DomainDataset target);

}  // namespace bdg::train

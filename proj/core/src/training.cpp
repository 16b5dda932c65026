#include "bdg/training.hpp"

#include <chrono>
#include <cmath>

#include "bdg/errors.hpp"

namespace bdg::train {

using ad::Tape;
using ad::Tensor;

std::string to_string(Variant v) {
    switch (v) {
        case Variant::v1: return "v1";
        case Variant::v2: return "v2";
        case Variant::v3: return "v3";
        case Variant::v4: return "v4";
        case Variant::v5: return "v5";
        case Variant::bdg: return "bdg";
    }
    return "bdg";
}

Variant variant_from(const std::string& s) {
    if (s == "v1") return Variant::v1;
    if (s == "v2") return Variant::v2;
    if (s == "v3") return Variant::v3;
    if (s == "v4") return Variant::v4;
    if (s == "v5") return Variant::v5;
    if (s == "bdg") return Variant::bdg;
    throw ConfigError("unknown variant: " + s);
}

void TrainConfig::validate() const {
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (gamma < 0.0) throw ConfigError("gamma must be non-negative");
    if (classifier_lr <= 0.0 || generator_lr <= 0.0) throw ConfigError("learning rates must be positive");
    if (classifier_momentum < 0.0 || classifier_momentum >= 1.0)
        throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (pretrain_iters < 1) throw ConfigError("pretrain iterations must be at least 1");
    if (iters < 1) throw ConfigError("main iterations must be at least 1");
    if (eval_period < 1) throw ConfigError("eval period must be at least 1");
    if (hidden < 1) throw ConfigError("hidden width must be at least 1");
}

bool Trainer::single_direction() const {
    return config_.variant == Variant::v1 || config_.variant == Variant::v2;
}

bool Trainer::has_gs() const { return gs_.dim() > 0; }
bool Trainer::has_ct() const { return ct_.dim() > 0; }

double Trainer::effective_lambda() const {
    switch (config_.variant) {
        case Variant::v2:
        case Variant::v5:
        case Variant::bdg: return config_.lambda;
        default: return 0.0;
    }
}

double Trainer::effective_gamma() const {
    switch (config_.variant) {
        case Variant::v4:
        case Variant::bdg: return config_.gamma;
        default: return 0.0;
    }
}

Trainer::Trainer(const TrainConfig& config, data::DomainDataset source, data::DomainDataset target)
    : config_(config),
      source_(std::move(source)),
      target_(std::move(target)),
      pretrain_opt_(config.classifier_lr, config.classifier_momentum),
      classifier_opt_(config.classifier_lr, config.classifier_momentum),
      generator_opt_(config.generator_lr),
      sampler_seed_rng_(0) {
    config_.validate();
    if (!source_.labeled()) throw ValidationError("source dataset must be labeled");
    if (source_.dim() != target_.dim())
        throw ValidationError("source and target feature widths differ");
    if (source_.classes != target_.classes)
        throw ValidationError("source and target class counts differ");
    if (source_.classes < 2) throw ValidationError("need at least 2 classes");

    const std::size_t d = source_.dim();
    const std::size_t h = config_.hidden;
    const std::size_t c = static_cast<std::size_t>(source_.classes);

    Rng master(config_.seed);
    if (!single_direction()) {
        gs_ = nn::Generator(d, h);
        gs_.init(master);
    }
    gt_ = nn::Generator(d, h);
    gt_.init(master);
    c0_ = nn::Classifier(d, h, c);
    c0_.init(master);
    cs_ = nn::Classifier(d, h, c);
    cs_.init(master);
    if (!single_direction()) {
        ct_ = nn::Classifier(d, h, c);
        ct_.init(master);
    }

    const std::uint64_t pre_seed = master.raw();
    const std::uint64_t src_seed = master.raw();
    const std::uint64_t tgt_seed = master.raw();
    sampler_seed_rng_ = Rng(tgt_seed);
    pretrain_sampler_ = std::make_unique<data::BatchSampler>(
        source_, data::SampleStrategy::class_balanced, Rng(pre_seed));
    source_sampler_ = std::make_unique<data::BatchSampler>(
        source_, data::SampleStrategy::class_balanced, Rng(src_seed));
}

double Trainer::accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (truth.empty() || predicted.size() != truth.size()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        if (predicted[i] == truth[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

void Trainer::step_a_pretrain() {
    if (pretrained_) throw ContractError("step A already completed");
    for (std::size_t i = 0; i < config_.pretrain_iters; ++i) {
        data::Batch batch = pretrain_sampler_->next(config_.batch_size);
        Tape tape;
        Tensor loss = losses::pretrain_loss(tape, c0_, batch.features, batch.labels);
        if (!std::isfinite(loss.value()))
            throw DivergenceError("pretrain loss non-finite at iteration " + std::to_string(i + 1));
        tape.backward(loss);
        auto params = c0_.params();
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (auto* p : params) grads.push_back(tape.grad_of(*p));
        pretrain_opt_.step(params, grads);
    }
    refresh_pseudo_labels(c0_);
    target_sampler_ = std::make_unique<data::BatchSampler>(
        target_, data::SampleStrategy::class_balanced, sampler_seed_rng_.split(), pseudo_labels_);
    pretrained_ = true;
}

void Trainer::refresh_pseudo_labels(const nn::Classifier& labeler) {
    pseudo_labels_ = labeler.predict(target_.features);
    if (target_sampler_) target_sampler_->set_labels(pseudo_labels_);
}

TrainBatch Trainer::draw_batch() {
    if (!pretrained_) throw ContractError("draw_batch before step A");
    TrainBatch b;
    b.source = source_sampler_->next(config_.batch_size);
    b.target = target_sampler_->next(config_.batch_size);
    return b;
}

void Trainer::step_b_classifiers(const TrainBatch& batch) {
    if (!pretrained_) throw ContractError("step B requires completed step A");
    Tape tape;
    Tensor loss;
    if (single_direction()) {
        Tensor f_s = gt_.forward(tape, batch.target.features);
        loss = losses::source_gan_loss(tape, cs_, batch.source.features, batch.source.labels,
                                       f_s, batch.target.labels, losses::Side::classifier);
    } else {
        losses::BatchBundle bundle =
            losses::make_bundle(tape, gs_, gt_, batch.source.features, batch.source.labels,
                                batch.target.features, batch.target.labels, source_.classes);
        losses::TotalLoss total =
            losses::total_loss(tape, cs_, ct_, bundle, effective_lambda(), effective_gamma(),
                               losses::Side::classifier);
        loss = total.value;
    }
    if (!std::isfinite(loss.value()))
        throw DivergenceError("classifier loss non-finite at iteration " +
                              std::to_string(iteration_ + 1));
    tape.backward(loss);
    std::vector<Tensor*> params = cs_.params();
    if (has_ct())
        for (auto* p : ct_.params()) params.push_back(p);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (auto* p : params) {
        Tensor g = tape.grad_of(*p);
        for (double v : g.data())
            if (!std::isfinite(v))
                throw DivergenceError("classifier gradient non-finite at iteration " +
                                      std::to_string(iteration_ + 1));
        grads.push_back(std::move(g));
    }
    classifier_opt_.step(params, grads);
}

void Trainer::step_c_generators(const TrainBatch& batch) {
    if (!pretrained_) throw ContractError("step C requires completed step A");
    Tape tape;
    Tensor loss;
    if (single_direction()) {
        Tensor f_s = gt_.forward(tape, batch.target.features);
        loss = losses::source_gan_loss(tape, cs_, batch.source.features, batch.source.labels,
                                       f_s, batch.target.labels, losses::Side::generator);
        const double lam = effective_lambda();
        if (lam != 0.0) {
            Tensor g = losses::global_mmd(tape, f_s, batch.source.features);
            losses::ClassMmdResult c =
                losses::class_mmd(tape, f_s, batch.target.labels, batch.source.features,
                                  batch.source.labels, source_.classes);
            Tensor mmd = ad::add(
                tape, g, ad::scale(tape, c.value, 1.0 / static_cast<double>(source_.classes)));
            loss = ad::add(tape, loss, ad::scale(tape, mmd, lam));
        }
    } else {
        losses::BatchBundle bundle =
            losses::make_bundle(tape, gs_, gt_, batch.source.features, batch.source.labels,
                                batch.target.features, batch.target.labels, source_.classes);
        losses::TotalLoss total =
            losses::total_loss(tape, cs_, ct_, bundle, effective_lambda(), effective_gamma(),
                               losses::Side::generator);
        loss = total.value;
    }
    if (!std::isfinite(loss.value()))
        throw DivergenceError("generator loss non-finite at iteration " +
                              std::to_string(iteration_ + 1));
    tape.backward(loss);
    std::vector<Tensor*> params;
    if (has_gs())
        for (auto* p : gs_.params()) params.push_back(p);
    for (auto* p : gt_.params()) params.push_back(p);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (auto* p : params) {
        Tensor g = tape.grad_of(*p);
        for (double v : g.data())
            if (!std::isfinite(v))
                throw DivergenceError("generator gradient non-finite at iteration " +
                                      std::to_string(iteration_ + 1));
        grads.push_back(std::move(g));
    }
    generator_opt_.step(params, grads);
}

double Trainer::evaluate_target_accuracy() const {
    return accuracy(cs_.predict(target_.features), target_.labels);
}

double Trainer::evaluate_baseline_accuracy() const {
    return accuracy(c0_.predict(target_.features), target_.labels);
}

double Trainer::evaluate_secondary_accuracy() const {
    if (!has_ct()) return 0.0;
    Tape tape(false);
    Tensor f_s = gt_.forward(tape, target_.features);
    return accuracy(ct_.predict(f_s), target_.labels);
}

double Trainer::evaluate_pseudo_accuracy() const {
    return accuracy(pseudo_labels_, target_.labels);
}

double Trainer::evaluate_source_train_accuracy() const {
    return accuracy(c0_.predict(source_.features), source_.labels);
}

MetricsRecord Trainer::eval_metrics(std::size_t iteration) const {
    if (!pretrained_) throw ContractError("metrics before step A");
    MetricsRecord rec;
    rec.iteration = iteration;
    Tape tape(false);
    if (single_direction()) {
        Tensor f_s = gt_.forward(tape, target_.features);
        rec.loss_gan_s = losses::source_gan_loss(tape, cs_, source_.features, source_.labels,
                                                 f_s, pseudo_labels_, losses::Side::classifier)
                             .value();
        rec.loss_mmd_t = losses::global_mmd(tape, f_s, source_.features).value();
        losses::ClassMmdResult c = losses::class_mmd(tape, f_s, pseudo_labels_, source_.features,
                                                     source_.labels, source_.classes);
        rec.loss_mmd_t += c.value.value() / static_cast<double>(source_.classes);
        rec.skipped_classes = c.skipped_classes;
    } else {
        losses::BatchBundle bundle = losses::make_bundle(
            tape, gs_, gt_, source_.features, source_.labels, target_.features, pseudo_labels_,
            source_.classes);
        rec.loss_gan_s =
            losses::source_gan_loss(tape, cs_, bundle, losses::Side::classifier).value();
        rec.loss_gan_t =
            losses::target_gan_loss(tape, ct_, bundle, losses::Side::classifier).value();
        losses::MmdResult mmd_s = losses::mmd_loss(tape, losses::Branch::source, bundle);
        losses::MmdResult mmd_t = losses::mmd_loss(tape, losses::Branch::target, bundle);
        rec.loss_mmd_s = mmd_s.value.value();
        rec.loss_mmd_t = mmd_t.value.value();
        rec.skipped_classes = mmd_s.skipped_classes + mmd_t.skipped_classes;
        rec.loss_con = losses::consistency_loss(tape, ct_, cs_, bundle.f_s).value();
        rec.secondary_acc = evaluate_secondary_accuracy();
    }
    rec.target_acc = evaluate_target_accuracy();
    const double checks[] = {rec.loss_gan_s, rec.loss_gan_t, rec.loss_mmd_s,
                             rec.loss_mmd_t, rec.loss_con};
    for (double v : checks)
        if (!std::isfinite(v))
            throw DivergenceError("non-finite loss in metrics at iteration " +
                                  std::to_string(iteration));
    return rec;
}

std::size_t Trainer::trained_param_count() const {
    std::size_t n = 0;
    for (const auto* p : c0_.params()) n += p->numel();
    for (const auto* p : cs_.params()) n += p->numel();
    for (const auto* p : gt_.params()) n += p->numel();
    if (has_ct())
        for (const auto* p : ct_.params()) n += p->numel();
    if (has_gs())
        for (const auto* p : gs_.params()) n += p->numel();
    return n;
}

std::vector<std::pair<std::string, Tensor*>> Trainer::named_params() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto append = [&out](std::vector<std::pair<std::string, Tensor*>> v) {
        for (auto& e : v) out.push_back(std::move(e));
    };
    if (has_gs()) append(gs_.named_params("gs"));
    append(gt_.named_params("gt"));
    append(c0_.named_params("c0"));
    append(cs_.named_params("cs"));
    if (has_ct()) append(ct_.named_params("ct"));
    return out;
}

RunResult Trainer::run() {
    const auto start = std::chrono::steady_clock::now();
    step_a_pretrain();
    RunResult result;
    result.baseline_accuracy = evaluate_baseline_accuracy();
    result.pseudo_label_accuracy = evaluate_pseudo_accuracy();
    result.trained_params = trained_param_count();
    for (iteration_ = 1; iteration_ <= config_.iters; ++iteration_) {
        TrainBatch batch = draw_batch();
        step_b_classifiers(batch);
        step_c_generators(batch);
        if (config_.pseudo_refresh > 0 && iteration_ % config_.pseudo_refresh == 0)
            refresh_pseudo_labels(cs_);
        if (iteration_ == 1 || iteration_ % config_.eval_period == 0 ||
            iteration_ == config_.iters) {
            MetricsRecord rec = eval_metrics(iteration_);
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
            result.metrics.push_back(rec);
        }
    }
    result.final_target_accuracy = evaluate_target_accuracy();
    return result;
}

RunResult run(const TrainConfig& config, data::DomainDataset source, data::DomainDataset target) {
    Trainer trainer(config, std::move(source), std::move(target));
    return trainer.run();
}

RunResult run_variant(TrainConfig config, Variant variant, data::DomainDataset source,
                      data::DomainDataset target) {
    config.variant = variant;
    Trainer trainer(config, std::move(source), std::move(target));
    return trainer.run();
}

}  // namespace bdg::train

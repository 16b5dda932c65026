#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>

#include "bdg/errors.hpp"
#include "bdg/losses.hpp"
#include "bdg/nn.hpp"

namespace bdg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

void expect_keys(const json& obj, std::initializer_list<const char*> allowed,
                 const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&key](const char* k) { return key == k; }) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

data::ShiftSpec parse_task(const json& obj) {
    expect_keys(obj,
                {"kind", "classes", "per_domain", "dim", "rotation_deg", "translation", "scale",
                 "noise_sigma", "imbalance", "seed"},
                "task");
    data::ShiftSpec spec;
    if (obj.contains("kind")) spec.kind = data::shift_kind_from(obj["kind"].get<std::string>());
    if (obj.contains("classes")) spec.classes = obj["classes"].get<int>();
    if (obj.contains("per_domain")) spec.per_domain = obj["per_domain"].get<int>();
    if (obj.contains("dim")) spec.dim = obj["dim"].get<int>();
    if (obj.contains("rotation_deg"))
        spec.rotation = obj["rotation_deg"].get<double>() * kPi / 180.0;
    if (obj.contains("translation"))
        spec.translation = obj["translation"].get<std::vector<double>>();
    if (obj.contains("scale")) spec.scale = obj["scale"].get<double>();
    if (obj.contains("noise_sigma")) spec.noise_sigma = obj["noise_sigma"].get<double>();
    if (obj.contains("imbalance")) spec.imbalance = obj["imbalance"].get<std::vector<double>>();
    if (obj.contains("seed")) spec.seed = obj["seed"].get<std::uint64_t>();
    return spec;
}

train::TrainConfig parse_train(const json& obj) {
    expect_keys(obj,
                {"lambda", "gamma", "classifier_lr", "classifier_momentum", "generator_lr",
                 "batch_size", "pretrain_iters", "iters", "seed", "variant",
                 "pseudo_label_refresh", "eval_period", "hidden"},
                "train");
    train::TrainConfig cfg;
    if (obj.contains("lambda")) cfg.lambda = obj["lambda"].get<double>();
    if (obj.contains("gamma")) cfg.gamma = obj["gamma"].get<double>();
    if (obj.contains("classifier_lr")) cfg.classifier_lr = obj["classifier_lr"].get<double>();
    if (obj.contains("classifier_momentum"))
        cfg.classifier_momentum = obj["classifier_momentum"].get<double>();
    if (obj.contains("generator_lr")) cfg.generator_lr = obj["generator_lr"].get<double>();
    if (obj.contains("batch_size")) cfg.batch_size = obj["batch_size"].get<std::size_t>();
    if (obj.contains("pretrain_iters"))
        cfg.pretrain_iters = obj["pretrain_iters"].get<std::size_t>();
    if (obj.contains("iters")) cfg.iters = obj["iters"].get<std::size_t>();
    if (obj.contains("seed")) cfg.seed = obj["seed"].get<std::uint64_t>();
    if (obj.contains("variant"))
        cfg.variant = train::variant_from(obj["variant"].get<std::string>());
    if (obj.contains("pseudo_label_refresh"))
        cfg.pseudo_refresh = obj["pseudo_label_refresh"].get<std::size_t>();
    if (obj.contains("eval_period")) cfg.eval_period = obj["eval_period"].get<std::size_t>();
    if (obj.contains("hidden")) cfg.hidden = obj["hidden"].get<std::size_t>();
    return cfg;
}

}  // namespace

ExperimentConfig parse_config_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    expect_keys(doc, {"task", "train", "output_dir", "seeds", "datasets"}, "config root");
    ExperimentConfig cfg;
    cfg.has_task = doc.contains("task");
    if (cfg.has_task) cfg.task = parse_task(doc["task"]);
    if (doc.contains("train")) cfg.train = parse_train(doc["train"]);
    if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
    if (doc.contains("seeds")) {
        cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
        if (cfg.seeds.empty()) throw ConfigError("seeds list must not be empty");
    }
    if (doc.contains("datasets")) {
        expect_keys(doc["datasets"], {"source", "target"}, "datasets");
        if (!doc["datasets"].contains("source") || !doc["datasets"].contains("target"))
            throw ConfigError("datasets needs both source and target paths");
        cfg.datasets = DatasetPaths{doc["datasets"]["source"].get<std::string>(),
                                    doc["datasets"]["target"].get<std::string>()};
        if (cfg.has_task)
            throw ConfigError("config must give either task or datasets, not both");
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config_json(doc);
}

std::string resolve_output_dir(const std::string& dir) {
    const char* root = std::getenv("BDG_OUTPUT_ROOT");
    fs::path p(dir);
    if (root && *root && p.is_relative()) p = fs::path(root) / p;
    return p.string();
}

std::pair<data::DomainDataset, data::DomainDataset> resolve_datasets(const ExperimentConfig& cfg) {
    if (cfg.datasets)
        return {data::load_dataset(cfg.datasets->source), data::load_dataset(cfg.datasets->target)};
    if (!cfg.has_task) throw ConfigError("config needs a task block or dataset paths");
    return data::make_domain_pair(cfg.task);
}

namespace {

std::string ensure_output_dir(const std::string& configured) {
    const std::string dir = resolve_output_dir(configured);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create output directory: " + dir);
    return dir;
}

void save_trainer_checkpoint(const std::string& path, train::Trainer& trainer, std::size_t dim,
                             int classes) {
    std::vector<std::pair<std::string, const ad::Tensor*>> entries;
    for (auto& [name, t] : trainer.named_params()) entries.emplace_back(name, t);
    nn::save_checkpoint(path, entries,
                        {{"dim", static_cast<std::int64_t>(dim)},
                         {"hidden", static_cast<std::int64_t>(trainer.config().hidden)},
                         {"classes", static_cast<std::int64_t>(classes)},
                         {"variant", static_cast<std::int64_t>(trainer.config().variant)}});
}

struct RunOutcome {
    bool ok = false;
    std::string error;
    double accuracy = 0.0;
    std::size_t trained_params = 0;
};

RunOutcome one_run(const ExperimentConfig& cfg, train::Variant variant, std::uint64_t seed) {
    RunOutcome out;
    try {
        auto [source, target] = resolve_datasets(cfg);
        train::TrainConfig tc = cfg.train;
        tc.variant = variant;
        tc.seed = seed;
        train::RunResult res = train::run(tc, std::move(source), std::move(target));
        out.ok = true;
        out.accuracy = res.final_target_accuracy;
        out.trained_params = res.trained_params;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

// Runs jobs in fixed-size waves; results land in their preassigned slots so
// output order never depends on completion order.
template <typename Job>
std::vector<RunOutcome> run_jobs(const std::vector<Job>& jobs, std::size_t workers) {
    std::vector<RunOutcome> results(jobs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = jobs[i]();
        return results;
    }
    for (std::size_t base = 0; base < jobs.size(); base += workers) {
        const std::size_t end = std::min(base + workers, jobs.size());
        std::vector<std::future<RunOutcome>> wave;
        for (std::size_t i = base; i < end; ++i)
            wave.push_back(std::async(std::launch::async, jobs[i]));
        for (std::size_t i = base; i < end; ++i) results[i] = wave[i - base].get();
    }
    return results;
}

}  // namespace

void write_metrics_csv(const std::string& path,
                       const std::vector<train::MetricsRecord>& metrics) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open metrics file: " + path);
    out << "iteration,loss_gan_s,loss_gan_t,loss_mmd_s,loss_mmd_t,loss_con,"
           "target_acc,secondary_acc,skipped_classes\n";
    for (const auto& m : metrics) {
        out << m.iteration << "," << fmt(m.loss_gan_s) << "," << fmt(m.loss_gan_t) << ","
            << fmt(m.loss_mmd_s) << "," << fmt(m.loss_mmd_t) << "," << fmt(m.loss_con) << ","
            << fmt(m.target_acc) << "," << fmt(m.secondary_acc) << "," << m.skipped_classes
            << "\n";
    }
    if (!out) throw IoError("writing metrics failed: " + path);
}

int cmd_gen_data(const ExperimentConfig& cfg) {
    if (!cfg.has_task) throw ConfigError("gen-data needs a task block");
    cfg.task.validate();
    if (cfg.task.is_identity_shift())
        std::cerr << "warning: no-shift spec (identity transform); target will match source in "
                     "distribution\n";
    const std::string dir = ensure_output_dir(cfg.output_dir);
    auto [source, target] = data::make_domain_pair(cfg.task);
    const std::string source_path = (fs::path(dir) / "source.csv").string();
    const std::string target_path = (fs::path(dir) / "target.csv").string();
    data::save_dataset(source, source_path);
    data::save_dataset(target, target_path);
    std::cout << "wrote " << source_path << " and " << target_path << "\n"
              << "n=" << source.size() << " per domain, d=" << source.dim()
              << ", C=" << source.classes << ", kind=" << data::to_string(cfg.task.kind)
              << ", rotation_deg=" << cfg.task.rotation * 180.0 / kPi
              << ", scale=" << cfg.task.scale << ", noise_sigma=" << cfg.task.noise_sigma
              << ", seed=" << cfg.task.seed << "\n";
    return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, TrainOutputs* outputs) {
    cfg.train.validate();
    if (cfg.has_task) cfg.task.validate();
    const std::string dir = ensure_output_dir(cfg.output_dir);
    auto [source, target] = resolve_datasets(cfg);
    const std::size_t dim = source.dim();
    const int classes = source.classes;
    train::Trainer trainer(cfg.train, std::move(source), std::move(target));
    train::RunResult res = trainer.run();

    const std::string metrics_path = (fs::path(dir) / "metrics.csv").string();
    write_metrics_csv(metrics_path, res.metrics);
    const std::string ckpt_path = (fs::path(dir) / "checkpoint.json").string();
    save_trainer_checkpoint(ckpt_path, trainer, dim, classes);

    const double wall_ms = res.metrics.empty() ? 0.0 : res.metrics.back().wall_ms;
    std::cout << "variant=" << train::to_string(cfg.train.variant)
              << " seed=" << cfg.train.seed << " final_target_acc=" << fmt(res.final_target_accuracy)
              << " baseline_acc=" << fmt(res.baseline_accuracy)
              << " pseudo_acc=" << fmt(res.pseudo_label_accuracy) << " wall_s="
              << fmt(wall_ms / 1000.0) << "\n";
    if (outputs)
        *outputs = {metrics_path, ckpt_path, res.final_target_accuracy, res.baseline_accuracy};
    return kExitOk;
}

int cmd_ablate(const ExperimentConfig& cfg, std::size_t jobs) {
    cfg.train.validate();
    const std::string dir = ensure_output_dir(cfg.output_dir);
    const train::Variant variants[] = {train::Variant::v1, train::Variant::v2,
                                       train::Variant::v3, train::Variant::v4,
                                       train::Variant::v5, train::Variant::bdg};
    std::vector<std::function<RunOutcome()>> work;
    for (auto v : variants)
        for (auto seed : cfg.seeds)
            work.push_back([&cfg, v, seed] { return one_run(cfg, v, seed); });
    std::vector<RunOutcome> results = run_jobs(work, jobs);

    const std::string table_path = (fs::path(dir) / "table.csv").string();
    std::ofstream table(table_path);
    if (!table) throw IoError("cannot open " + table_path);
    table << "variant,seed,final_accuracy,trained_params,status\n";
    std::size_t idx = 0;
    std::map<std::string, std::pair<double, std::size_t>> agg;
    for (auto v : variants)
        for (auto seed : cfg.seeds) {
            const RunOutcome& r = results[idx++];
            table << train::to_string(v) << "," << seed << ","
                  << (r.ok ? fmt(r.accuracy) : "") << "," << r.trained_params << ","
                  << (r.ok ? "ok" : r.error) << "\n";
            if (r.ok) {
                agg[train::to_string(v)].first += r.accuracy;
                agg[train::to_string(v)].second += 1;
            }
        }
    if (!table) throw IoError("writing " + table_path + " failed");
    table.close();

    const std::string summary_path = (fs::path(dir) / "summary.csv").string();
    std::ofstream summary(summary_path);
    if (!summary) throw IoError("cannot open " + summary_path);
    summary << "variant,mean_accuracy,runs\n";
    for (auto v : variants) {
        const auto& [total, n] = agg[train::to_string(v)];
        summary << train::to_string(v) << "," << (n ? fmt(total / static_cast<double>(n)) : "")
                << "," << n << "\n";
    }
    std::cout << "wrote " << table_path << " and " << summary_path << " ("
              << results.size() << " runs)\n";
    return kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& param, std::vector<double> grid,
              std::size_t jobs) {
    if (param != "lambda" && param != "gamma")
        throw ConfigError("sweep param must be lambda or gamma, got '" + param + "'");
    if (grid.empty()) grid = {0.1, 0.2, 0.5, 1.0, 1.2, 1.5, 2.0};
    cfg.train.validate();
    const std::string dir = ensure_output_dir(cfg.output_dir);

    std::vector<std::function<RunOutcome()>> work;
    for (double value : grid)
        for (auto seed : cfg.seeds)
            work.push_back([&cfg, &param, value, seed] {
                ExperimentConfig local = cfg;
                // the swept parameter moves; the other is pinned at 1
                local.train.lambda = 1.0;
                local.train.gamma = 1.0;
                if (param == "lambda")
                    local.train.lambda = value;
                else
                    local.train.gamma = value;
                return one_run(local, local.train.variant, seed);
            });
    std::vector<RunOutcome> results = run_jobs(work, jobs);

    const std::string sweep_path = (fs::path(dir) / "sweep.csv").string();
    std::ofstream out(sweep_path);
    if (!out) throw IoError("cannot open " + sweep_path);
    out << "param,value,seed,final_accuracy,status\n";
    std::size_t idx = 0;
    std::vector<std::pair<double, std::pair<double, std::size_t>>> agg;
    for (double value : grid) {
        double total = 0.0;
        std::size_t n = 0;
        for (auto seed : cfg.seeds) {
            const RunOutcome& r = results[idx++];
            out << param << "," << fmt(value) << "," << seed << ","
                << (r.ok ? fmt(r.accuracy) : "") << "," << (r.ok ? "ok" : r.error) << "\n";
            if (r.ok) {
                total += r.accuracy;
                ++n;
            }
        }
        agg.push_back({value, {total, n}});
    }
    if (!out) throw IoError("writing " + sweep_path + " failed");
    out.close();

    const std::string summary_path = (fs::path(dir) / "sweep_summary.csv").string();
    std::ofstream summary(summary_path);
    if (!summary) throw IoError("cannot open " + summary_path);
    summary << "param,value,mean_accuracy,runs\n";
    for (const auto& [value, acc] : agg)
        summary << param << "," << fmt(value) << ","
                << (acc.second ? fmt(acc.first / static_cast<double>(acc.second)) : "") << ","
                << acc.second << "\n";
    std::cout << "wrote " << sweep_path << " and " << summary_path << " (" << results.size()
              << " runs)\n";
    return kExitOk;
}

int cmd_export_embeddings(const std::string& checkpoint_path, const std::string& source_path,
                          const std::string& target_path, const std::string& out_path) {
    nn::Checkpoint ck = nn::load_checkpoint(checkpoint_path);
    data::DomainDataset source = data::load_dataset(source_path);
    data::DomainDataset target = data::load_dataset(target_path);

    const auto dim = static_cast<std::size_t>(ck.meta_value("dim"));
    const auto hidden = static_cast<std::size_t>(ck.meta_value("hidden"));
    const auto classes = static_cast<std::size_t>(ck.meta_value("classes"));
    if (source.dim() != dim || target.dim() != dim)
        throw ValidationError("checkpoint expects d=" + std::to_string(dim) +
                              " but datasets have d=" + std::to_string(source.dim()));
    if (static_cast<std::size_t>(source.classes) != classes)
        throw ValidationError("checkpoint/dataset class count mismatch");

    auto load_linear = [&ck](const std::string& prefix, nn::Linear& l) {
        l.w = ck.tensor(prefix + ".w");
        l.b = ck.tensor(prefix + ".b");
    };
    auto load_classifier = [&](const std::string& prefix, nn::Classifier& c) {
        c = nn::Classifier(dim, hidden, classes);
        load_linear(prefix + ".l1", c.l1);
        load_linear(prefix + ".l2", c.l2);
        load_linear(prefix + ".cls", c.class_head);
        load_linear(prefix + ".dom", c.domain_head);
    };
    auto load_generator = [&](const std::string& prefix, nn::Generator& g) {
        g = nn::Generator(dim, hidden);
        load_linear(prefix + ".l1", g.l1);
        load_linear(prefix + ".l2", g.l2);
        load_linear(prefix + ".l3", g.l3);
    };

    nn::Classifier c0, cs;
    load_classifier("c0", c0);
    load_classifier("cs", cs);
    nn::Generator gt;
    load_generator("gt", gt);
    const bool bidir = ck.has("gs.l1.w");
    nn::Generator gs;
    if (bidir) load_generator("gs", gs);

    std::vector<int> pseudo = c0.predict(target.features);

    ad::Tape tape(false);
    ad::Tensor f_s = gt.forward(tape, target.features);
    ad::Tensor f_t;
    if (bidir) f_t = gs.forward(tape, source.features);

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open " + out_path);
    out << "set,label";
    for (std::size_t j = 0; j < hidden; ++j) out << ",a" << j;
    out << "\n";
    auto emit = [&](const char* set, const ad::Tensor& batch, const std::vector<int>& labels) {
        ad::Tape t(false);
        ad::Tensor acts = cs.trunk_forward(t, batch);
        for (std::size_t i = 0; i < batch.rows(); ++i) {
            out << set << "," << labels[i];
            for (std::size_t j = 0; j < hidden; ++j) out << "," << fmt(acts.at(i, j));
            out << "\n";
        }
    };
    emit("Xs", source.features, source.labels);
    if (bidir) emit("Ft", f_t, source.labels);
    emit("Fs", f_s, pseudo);
    emit("Xt", target.features, pseudo);
    if (!out) throw IoError("writing " + out_path + " failed");
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

}  // namespace bdg::cli

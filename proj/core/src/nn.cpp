#include "bdg/nn.hpp"

#include <cmath>
#include <fstream>

#include "bdg/errors.hpp"
#include "json.hpp"

namespace bdg::nn {

using ad::Tape;
using ad::Tensor;

void init_xavier(Rng& rng, Linear& layer) {
    const double fan_in = static_cast<double>(layer.w.rows());
    const double fan_out = static_cast<double>(layer.w.cols());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : layer.w.data()) v = rng.uniform(-limit, limit);
    for (auto& v : layer.b.data()) v = 0.0;
}

Tensor linear(Tape& tape, const Linear& layer, const Tensor& x) {
    Tensor w = tape.watch(layer.w);
    Tensor b = tape.watch(layer.b);
    Tensor wx = ad::matmul(tape, x, w);
    Tensor ones = Tensor::full(x.rows(), 1, 1.0);
    Tensor bias = ad::matmul(tape, ones, b);
    return ad::add(tape, wx, bias);
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(std::size_t dim, std::size_t hidden, bool residual)
    : l1(dim, hidden), l2(hidden, hidden), l3(hidden, dim),
      dim_(dim), hidden_(hidden), residual_(residual) {}

void Generator::init(Rng& rng) {
    init_xavier(rng, l1);
    init_xavier(rng, l2);
    init_xavier(rng, l3);
}

Tensor Generator::forward(Tape& tape, const Tensor& x) const {
    if (x.cols() != dim_)
        throw DimensionError("generator expects width " + std::to_string(dim_) + ", got " +
                             Tensor::shape_str(x.shape()));
    Tensor h1 = ad::tanh_act(tape, linear(tape, l1, x));
    Tensor h2 = ad::tanh_act(tape, linear(tape, l2, h1));
    Tensor out = linear(tape, l3, h2);
    if (residual_) out = ad::add(tape, x, out);
    return out;
}

std::vector<Tensor*> Generator::params() {
    return {&l1.w, &l1.b, &l2.w, &l2.b, &l3.w, &l3.b};
}

std::vector<const Tensor*> Generator::params() const {
    return {&l1.w, &l1.b, &l2.w, &l2.b, &l3.w, &l3.b};
}

std::vector<std::pair<std::string, Tensor*>> Generator::named_params(const std::string& prefix) {
    return {{prefix + ".l1.w", &l1.w}, {prefix + ".l1.b", &l1.b},
            {prefix + ".l2.w", &l2.w}, {prefix + ".l2.b", &l2.b},
            {prefix + ".l3.w", &l3.w}, {prefix + ".l3.b", &l3.b}};
}

// ---------------------------------------------------------------------------
// Classifier

Classifier::Classifier(std::size_t dim, std::size_t hidden, std::size_t classes)
    : l1(dim, hidden), l2(hidden, hidden), class_head(hidden, classes), domain_head(hidden, 1),
      dim_(dim), hidden_(hidden), classes_(classes) {}

void Classifier::init(Rng& rng) {
    init_xavier(rng, l1);
    init_xavier(rng, l2);
    init_xavier(rng, class_head);
    init_xavier(rng, domain_head);
}

Tensor Classifier::trunk_forward(Tape& tape, const Tensor& x) const {
    if (x.cols() != dim_)
        throw DimensionError("classifier expects width " + std::to_string(dim_) + ", got " +
                             Tensor::shape_str(x.shape()));
    Tensor h1 = ad::relu(tape, linear(tape, l1, x));
    return ad::relu(tape, linear(tape, l2, h1));
}

ClassifierOut Classifier::forward(Tape& tape, const Tensor& x) const {
    Tensor trunk = trunk_forward(tape, x);
    Tensor class_probs = ad::softmax_rows(tape, linear(tape, class_head, trunk));
    Tensor domain_prob = ad::sigmoid(tape, linear(tape, domain_head, trunk));
    return {std::move(class_probs), std::move(domain_prob), std::move(trunk)};
}

std::vector<int> Classifier::predict(const Tensor& x) const {
    Tape tape(false);
    ClassifierOut out = forward(tape, x);
    std::vector<int> ids(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        int best = 0;
        double best_p = out.class_probs.at(i, 0);
        for (std::size_t c = 1; c < classes_; ++c) {
            if (out.class_probs.at(i, c) > best_p) {
                best_p = out.class_probs.at(i, c);
                best = static_cast<int>(c);
            }
        }
        ids[i] = best;
    }
    return ids;
}

std::vector<Tensor*> Classifier::params() {
    return {&l1.w, &l1.b, &l2.w, &l2.b, &class_head.w, &class_head.b, &domain_head.w, &domain_head.b};
}

std::vector<const Tensor*> Classifier::params() const {
    return {&l1.w, &l1.b, &l2.w, &l2.b, &class_head.w, &class_head.b, &domain_head.w, &domain_head.b};
}

std::vector<Tensor*> Classifier::trunk_params() { return {&l1.w, &l1.b, &l2.w, &l2.b}; }
std::vector<Tensor*> Classifier::class_head_params() { return {&class_head.w, &class_head.b}; }
std::vector<Tensor*> Classifier::domain_head_params() { return {&domain_head.w, &domain_head.b}; }

std::vector<std::pair<std::string, Tensor*>> Classifier::named_params(const std::string& prefix) {
    return {{prefix + ".l1.w", &l1.w},          {prefix + ".l1.b", &l1.b},
            {prefix + ".l2.w", &l2.w},          {prefix + ".l2.b", &l2.b},
            {prefix + ".cls.w", &class_head.w}, {prefix + ".cls.b", &class_head.b},
            {prefix + ".dom.w", &domain_head.w}, {prefix + ".dom.b", &domain_head.b}};
}

// ---------------------------------------------------------------------------
// Optimizers

namespace {

void check_grads(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                 const char* who) {
    if (params.size() != grads.size())
        throw StateError(std::string(who) + ": parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i]->same_shape(grads[i]))
            throw StateError(std::string(who) + ": gradient shape " +
                             Tensor::shape_str(grads[i].shape()) + " does not match parameter " +
                             Tensor::shape_str(params[i]->shape()));
}

}  // namespace

void SgdMomentum::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    check_grads(params, grads, "sgd_momentum");
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            velocity_[i].assign(params[i]->numel(), 0.0);
    }
    if (velocity_.size() != params.size())
        throw StateError("sgd_momentum: state serves a different parameter set");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (velocity_[i].size() != params[i]->numel())
            throw StateError("sgd_momentum: velocity buffer shape mismatch");
        auto& p = params[i]->data();
        const auto& g = grads[i].data();
        auto& v = velocity_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = momentum_ * v[j] + g[j];
            p[j] -= lr_ * v[j];
        }
    }
    ++steps_;
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    check_grads(params, grads, "adam");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->numel(), 0.0);
            v_[i].assign(params[i]->numel(), 0.0);
        }
    }
    if (m_.size() != params.size())
        throw StateError("adam: state serves a different parameter set");
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(beta1_, t);
    const double bc2 = 1.0 - std::pow(beta2_, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (m_[i].size() != params[i]->numel())
            throw StateError("adam: moment buffer shape mismatch");
        auto& p = params[i]->data();
        const auto& g = grads[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries,
                     const std::vector<std::pair<std::string, std::int64_t>>& meta) {
    nlohmann::ordered_json doc;
    doc["format"] = "bdg-checkpoint-v1";
    nlohmann::ordered_json m;
    for (const auto& [k, v] : meta) m[k] = v;
    doc["meta"] = std::move(m);
    nlohmann::ordered_json tensors;
    for (const auto& [name, t] : entries) {
        nlohmann::ordered_json e;
        e["shape"] = t->shape();
        e["data"] = t->data();
        tensors[name] = std::move(e);
    }
    doc["tensors"] = std::move(tensors);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << doc.dump(1) << "\n";
    if (!out) throw IoError("writing checkpoint failed: " + path);
}

const Tensor& Checkpoint::tensor(const std::string& key) const {
    for (const auto& [k, t] : entries)
        if (k == key) return t;
    throw ValidationError("checkpoint is missing tensor: " + key);
}

std::int64_t Checkpoint::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return v;
    throw ValidationError("checkpoint is missing meta key: " + key);
}

bool Checkpoint::has(const std::string& key) const {
    for (const auto& [k, t] : entries)
        if (k == key) return true;
    return false;
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.contains("format") || doc["format"] != "bdg-checkpoint-v1")
        throw ValidationError("unrecognized checkpoint format in " + path);
    Checkpoint ck;
    for (const auto& [k, v] : doc.at("meta").items())
        ck.meta.emplace_back(k, v.get<std::int64_t>());
    for (const auto& [name, e] : doc.at("tensors").items()) {
        std::vector<std::size_t> shape = e.at("shape").get<std::vector<std::size_t>>();
        std::vector<double> data = e.at("data").get<std::vector<double>>();
        ck.entries.emplace_back(name, Tensor(std::move(shape), std::move(data)));
    }
    return ck;
}

}  // namespace bdg::nn

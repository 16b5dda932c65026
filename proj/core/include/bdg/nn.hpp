#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bdg/rng.hpp"
#include "bdg/tensor.hpp"

namespace bdg::nn {

// Fully connected layer parameters: w is in x out, b is 1 x out.
struct Linear {
    ad::Tensor w;
    ad::Tensor b;

    Linear() = default;
    Linear(std::size_t in, std::size_t out) : w({in, out}), b({1, out}) {}
};

// Xavier-uniform weights, zero biases. Deterministic given the rng state.
void init_xavier(Rng& rng, Linear& layer);

// x.w + b, with the bias row tiled over the batch through a ones column so
// the gradient flows to b as column sums.
ad::Tensor linear(ad::Tape& tape, const Linear& layer, const ad::Tensor& x);

// Feature-space endomorphism d -> h -> h -> d with tanh hidden activations.
// With the residual flag on, output = input + trunk(input), so a zeroed
// trunk is the identity map.
class Generator {
public:
    Generator() = default;
    Generator(std::size_t dim, std::size_t hidden, bool residual = true);

    void init(Rng& rng);

    ad::Tensor forward(ad::Tape& tape, const ad::Tensor& x) const;

    std::vector<ad::Tensor*> params();
    std::vector<const ad::Tensor*> params() const;
    std::vector<std::pair<std::string, ad::Tensor*>> named_params(const std::string& prefix);

    std::size_t dim() const { return dim_; }
    std::size_t hidden() const { return hidden_; }
    bool residual() const { return residual_; }

    Linear l1, l2, l3;

private:
    std::size_t dim_ = 0, hidden_ = 0;
    bool residual_ = true;
};

struct ClassifierOut {
    ad::Tensor class_probs;  // m x C, rows sum to 1
    ad::Tensor domain_prob;  // m x 1, entries in (0,1)
    ad::Tensor trunk;        // m x h activations feeding both heads
};

// Shared relu trunk d -> h -> h with a C-way class head and a 1-logit
// domain head. The same network carries the classification loss and the
// domain discrimination loss.
class Classifier {
public:
    Classifier() = default;
    Classifier(std::size_t dim, std::size_t hidden, std::size_t classes);

    void init(Rng& rng);

    ClassifierOut forward(ad::Tape& tape, const ad::Tensor& x) const;
    ad::Tensor trunk_forward(ad::Tape& tape, const ad::Tensor& x) const;

    // Argmax class ids on a batch; ties break toward the lowest class id.
    std::vector<int> predict(const ad::Tensor& x) const;

    std::vector<ad::Tensor*> params();
    std::vector<const ad::Tensor*> params() const;
    std::vector<ad::Tensor*> trunk_params();
    std::vector<ad::Tensor*> class_head_params();
    std::vector<ad::Tensor*> domain_head_params();
    std::vector<std::pair<std::string, ad::Tensor*>> named_params(const std::string& prefix);

    std::size_t dim() const { return dim_; }
    std::size_t hidden() const { return hidden_; }
    std::size_t classes() const { return classes_; }

    Linear l1, l2, class_head, domain_head;

private:
    std::size_t dim_ = 0, hidden_ = 0, classes_ = 0;
};

// Classical momentum: v <- mu v + g; p <- p - lr v.
class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    void step(const std::vector<ad::Tensor*>& params, const std::vector<ad::Tensor>& grads);

    std::uint64_t steps() const { return steps_; }
    double lr() const { return lr_; }
    double momentum() const { return momentum_; }

private:
    double lr_, momentum_;
    std::vector<std::vector<double>> velocity_;
    std::uint64_t steps_ = 0;
};

// Adam with bias correction.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<ad::Tensor*>& params, const std::vector<ad::Tensor>& grads);

    std::uint64_t steps() const { return steps_; }
    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t steps_ = 0;
};

// Checkpoints are JSON: a meta object plus key -> {shape, data} entries.
// nlohmann::json prints doubles shortest-round-trip, so the format is
// lossless in double precision.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const ad::Tensor*>>& entries,
                     const std::vector<std::pair<std::string, std::int64_t>>& meta);
struct Checkpoint {
    std::vector<std::pair<std::string, ad::Tensor>> entries;
    std::vector<std::pair<std::string, std::int64_t>> meta;

    const ad::Tensor& tensor(const std::string& key) const;
    std::int64_t meta_value(const std::string& key) const;
    bool has(const std::string& key) const;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bdg::nn

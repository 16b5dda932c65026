#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bdg/errors.hpp"

namespace bdg::ad {

namespace detail {
struct TapeOps;
}

// Dense row-major tensor of doubles. Value semantics; an optional node id
// ties it to the Tape that produced it.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), values_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (count(shape_) != values_.size())
            throw DimensionError("tensor value count does not match shape product");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
    static Tensor row(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({1, n}, std::move(v));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }
    static Tensor full(std::size_t rows, std::size_t cols, double v) {
        Tensor t({rows, cols});
        for (auto& x : t.values_) x = v;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t numel() const { return values_.size(); }
    std::size_t rank() const { return shape_.size(); }

    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? (shape_.empty() ? 0 : 1) : shape_[1]; }

    double& at(std::size_t i, std::size_t j) { return values_[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    // Scalar read; contract-checked.
    double value() const {
        if (numel() != 1) throw ContractError("value() requires a scalar tensor");
        return values_[0];
    }

    std::vector<double>& data() { return values_; }
    const std::vector<double>& data() const { return values_; }

    bool tracked() const { return node_ >= 0; }
    int node() const { return node_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static std::string shape_str(const std::vector<std::size_t>& s);

private:
    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return s.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> values_;
    int node_ = -1;

    friend class Tape;
    friend struct detail::TapeOps;
};

// Log inputs are clamped to >= kLogEps before evaluation, which keeps every
// loss finite for finite inputs.
inline constexpr double kLogEps = 1e-7;

// Reverse-mode tape. One tape records one forward pass; backward() walks it
// once in reverse. Operations append nodes in execution order, so the record
// is topologically sorted by construction. Tapes are single-threaded;
// independent tapes may run concurrently.
class Tape {
public:
    explicit Tape(bool tracking = true) : tracking_(tracking) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Register a leaf. The returned copy participates in the recording; the
    // gradient is later fetched with grad_of(param). Watching the same
    // parameter several times in one tape is fine: gradients from every use
    // are summed. In a non-tracking tape this is a pass-through.
    Tensor watch(const Tensor& param) {
        if (!tracking_) return param;
        Tensor t = param;
        t.node_ = push(t.numel(), nullptr);
        watched_[&param].push_back(t.node_);
        return t;
    }

    bool tracking() const { return tracking_; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient of the last backward()'s loss w.r.t. a watched parameter
    // (summed over all watches) or w.r.t. any tracked tensor from this tape.
    Tensor grad_of(const Tensor& t) const {
        if (!backward_done_) throw ContractError("grad_of before backward()");
        auto it = watched_.find(&t);
        if (it != watched_.end()) {
            Tensor g(t.shape_);
            for (int id : it->second)
                for (std::size_t i = 0; i < g.numel(); ++i) g.values_[i] += grads_[id][i];
            return g;
        }
        if (!t.tracked()) throw ContractError("grad_of on an untracked tensor");
        Tensor g(t.shape_);
        g.values_ = grads_[t.node_];
        return g;
    }

    // Seeds the scalar loss with 1 and accumulates gradients onto every
    // tracked ancestor. Each node is visited exactly once. A second call
    // on the same tape is an error.
    void backward(const Tensor& loss) {
        if (loss.numel() != 1) throw ContractError("backward requires a scalar loss");
        if (!loss.tracked()) throw ContractError("backward on an untracked loss");
        if (nodes_.empty()) throw ContractError("backward on an empty tape");
        if (backward_done_) throw ContractError("repeated backward without a fresh tape");
        grads_.assign(nodes_.size(), {});
        for (std::size_t i = 0; i < nodes_.size(); ++i) grads_[i].assign(nodes_[i].numel, 0.0);
        grads_[loss.node_][0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].pull) nodes_[i].pull(grads_);
        }
        backward_done_ = true;
    }

private:
    struct Node {
        std::size_t numel;
        // Reads this node's buffer from the array and accumulates into the
        // parents' buffers. Null for leaves.
        std::function<void(std::vector<std::vector<double>>&)> pull;
    };

    int push(std::size_t numel, std::function<void(std::vector<std::vector<double>>&)> pull) {
        nodes_.push_back({numel, std::move(pull)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::unordered_map<const void*, std::vector<int>> watched_;
    bool tracking_ = true;
    bool backward_done_ = false;

    friend struct detail::TapeOps;
};

enum class Elementwise { add, sub, mul };
enum class Activation { relu, tanh, sigmoid, log };
enum class Reduction { mean_all, mean_rows, sum, l1_norm, l2_norm };

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// Pointwise binary op. Shapes must match exactly, except that either side may
// be a scalar (numel 1), which broadcasts against the other.
Tensor elementwise(Tape& tape, const Tensor& a, const Tensor& b, Elementwise kind);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);
Tensor add_const(Tape& tape, const Tensor& a, double c);

Tensor activation(Tape& tape, const Tensor& a, Activation kind);
Tensor relu(Tape& tape, const Tensor& a);
Tensor tanh_act(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor log_clamped(Tape& tape, const Tensor& a);

// Row-wise softmax with max-subtraction for stability.
Tensor softmax_rows(Tape& tape, const Tensor& a);

Tensor reduce(Tape& tape, const Tensor& a, Reduction kind);
Tensor mean_all(Tape& tape, const Tensor& a);
Tensor mean_rows(Tape& tape, const Tensor& a);
Tensor sum_all(Tape& tape, const Tensor& a);
Tensor l1_norm(Tape& tape, const Tensor& a);
Tensor l2_norm(Tape& tape, const Tensor& a);

}  // namespace bdg::ad

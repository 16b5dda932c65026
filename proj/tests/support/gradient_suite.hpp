#pragma once

// Finite-difference sweep over every differentiable tape operation. Shared
// between the unit tests and the acceptance suite: each case builds a random
// scalar loss through one operation and compares backward() against the
// central-difference oracle.

#include <functional>
#include <string>
#include <vector>

#include "bdg/tensor.hpp"
#include "finite_diff.hpp"

namespace testsupport {

struct OpGradResult {
    std::string op;
    double worst_rel_err = 0.0;
    int cases = 0;
};

namespace detail {

// Scalar probe loss: sum(w . f(inputs)), with fixed random weights w.
inline double probe_loss(const std::function<bdg::ad::Tensor(bdg::ad::Tape&)>& f,
                         const bdg::ad::Tensor& w) {
    bdg::ad::Tape tape;
    bdg::ad::Tensor out = f(tape);
    return bdg::ad::sum_all(tape, bdg::ad::mul(tape, out, w)).value();
}

inline double graded_probe(const std::function<bdg::ad::Tensor(bdg::ad::Tape&)>& f,
                           const bdg::ad::Tensor& w, bdg::ad::Tensor& param,
                           std::vector<double>& analytic_out) {
    bdg::ad::Tape tape;
    bdg::ad::Tensor out = f(tape);
    bdg::ad::Tensor loss = bdg::ad::sum_all(tape, bdg::ad::mul(tape, out, w));
    tape.backward(loss);
    analytic_out = tape.grad_of(param).data();
    return loss.value();
}

}  // namespace detail

// One gradient case: checks d loss / d param for `param` used inside `build`.
// `build` must watch the param itself (so perturbed evaluations see updates).
inline double grad_case(bdg::ad::Tensor& param,
                        const std::function<bdg::ad::Tensor(bdg::ad::Tape&)>& build,
                        const bdg::ad::Tensor& w) {
    std::vector<double> analytic;
    detail::graded_probe(build, w, param, analytic);
    std::vector<double> fd =
        central_diff(param, [&] { return detail::probe_loss(build, w); });
    return max_rel_err(analytic, fd);
}

inline std::vector<OpGradResult> run_gradient_suite(int cases_per_op, std::uint64_t seed = 20240501) {
    using namespace bdg::ad;
    bdg::Rng rng(seed);
    std::vector<OpGradResult> results;

    auto record = [&results](const std::string& name, double err, int cases) {
        results.push_back({name, err, cases});
    };

    // matmul: both operands
    {
        double worst = 0.0;
        for (int k = 0; k < cases_per_op; ++k) {
            Tensor a = random_tensor(rng, 3, 4);
            Tensor b = random_tensor(rng, 4, 2);
            Tensor w = random_tensor(rng, 3, 2);
            worst = std::max(worst, grad_case(a, [&](Tape& t) {
                return matmul(t, t.watch(a), t.watch(b));
            }, w));
            worst = std::max(worst, grad_case(b, [&](Tape& t) {
                return matmul(t, t.watch(a), t.watch(b));
            }, w));
        }
        record("matmul", worst, cases_per_op);
    }

    // elementwise add/sub/mul
    for (auto kind : {Elementwise::add, Elementwise::sub, Elementwise::mul}) {
        const char* name = kind == Elementwise::add ? "elementwise_add"
                            : kind == Elementwise::sub ? "elementwise_sub"
                                                       : "elementwise_mul";
        double worst = 0.0;
        for (int k = 0; k < cases_per_op; ++k) {
            Tensor a = random_tensor(rng, 4, 3);
            Tensor b = random_tensor(rng, 4, 3);
            Tensor w = random_tensor(rng, 4, 3);
            worst = std::max(worst, grad_case(a, [&](Tape& t) {
                return elementwise(t, t.watch(a), t.watch(b), kind);
            }, w));
            worst = std::max(worst, grad_case(b, [&](Tape& t) {
                return elementwise(t, t.watch(a), t.watch(b), kind);
            }, w));
        }
        record(name, worst, cases_per_op);
    }

    // activations; inputs kept away from kinks (relu at 0, log clamp at eps)
    {
        struct ActCase {
            Activation kind;
            const char* name;
            double lo, hi, kink, margin;
        } acts[] = {
            {Activation::relu, "relu", -1.0, 1.0, 0.0, 1e-3},
            {Activation::tanh, "tanh", -2.0, 2.0, 1e9, 0.0},
            {Activation::sigmoid, "sigmoid", -4.0, 4.0, 1e9, 0.0},
            {Activation::log, "log", 0.05, 2.0, 1e9, 0.0},
        };
        for (const auto& ac : acts) {
            double worst = 0.0;
            for (int k = 0; k < cases_per_op; ++k) {
                Tensor a = random_tensor_away_from(rng, 3, 5, ac.kink, ac.margin, ac.lo, ac.hi);
                Tensor w = random_tensor(rng, 3, 5);
                worst = std::max(worst, grad_case(a, [&](Tape& t) {
                    return activation(t, t.watch(a), ac.kind);
                }, w));
            }
            record(ac.name, worst, cases_per_op);
        }
    }

    // softmax_rows: full Jacobian contraction against random upstream weights
    {
        double worst = 0.0;
        for (int k = 0; k < cases_per_op; ++k) {
            Tensor a = random_tensor(rng, 4, 5, -2.0, 2.0);
            Tensor w = random_tensor(rng, 4, 5);
            worst = std::max(worst, grad_case(a, [&](Tape& t) {
                return softmax_rows(t, t.watch(a));
            }, w));
        }
        record("softmax_rows", worst, cases_per_op);
    }

    // reductions
    {
        struct RedCase {
            Reduction kind;
            const char* name;
            bool away_from_zero;
        } reds[] = {
            {Reduction::mean_all, "mean_all", false},
            {Reduction::mean_rows, "mean_rows", false},
            {Reduction::sum, "sum", false},
            {Reduction::l1_norm, "l1_norm", true},
            {Reduction::l2_norm, "l2_norm", false},
        };
        for (const auto& rc : reds) {
            double worst = 0.0;
            for (int k = 0; k < cases_per_op; ++k) {
                Tensor a = rc.away_from_zero
                               ? random_tensor_away_from(rng, 4, 3, 0.0, 1e-3, -1.0, 1.0)
                               : random_tensor(rng, 4, 3);
                Tensor out_probe;
                {
                    Tape t0;
                    out_probe = reduce(t0, a, rc.kind);
                }
                Tensor w = random_tensor(rng, out_probe.rows(), out_probe.cols());
                worst = std::max(worst, grad_case(a, [&](Tape& t) {
                    return reduce(t, t.watch(a), rc.kind);
                }, w));
            }
            record(rc.name, worst, cases_per_op);
        }
    }

    return results;
}

}  // namespace testsupport

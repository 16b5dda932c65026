#include "bdg/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace bdg::ad {

std::string Tensor::shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

using GradArray = std::vector<std::vector<double>>;
using PullFn = std::function<void(GradArray&)>;

struct TapeOps {
    static int reserve(Tape& tape, std::size_t numel) { return tape.push(numel, nullptr); }
    static void set_pull(Tape& tape, int id, PullFn f) {
        tape.nodes_[static_cast<std::size_t>(id)].pull = std::move(f);
    }
    static void set_node(Tensor& t, int id) { t.node_ = id; }
};

}  // namespace detail

namespace {

using detail::GradArray;
using detail::TapeOps;

// Attaches `out` to the tape when any input was tracked. `make_pull` is
// called with the fresh node id and must return the backward closure.
template <typename MakePull>
Tensor finish(Tape& tape, Tensor out, bool any_tracked, MakePull&& make_pull) {
    if (!tape.tracking() || !any_tracked) return out;
    const int self = TapeOps::reserve(tape, out.numel());
    TapeOps::set_node(out, self);
    TapeOps::set_pull(tape, self, make_pull(self));
    return out;
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + " requires a rank-2 tensor, got " +
                             Tensor::shape_str(t.shape()));
}

void check_nonempty(const Tensor& t, const char* op) {
    if (t.numel() == 0)
        throw DegenerateBatchError(std::string(op) + " on an empty tensor");
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a.cols() != b.rows())
        throw DimensionError("matmul inner extents differ: " + Tensor::shape_str(a.shape()) +
                             " vs " + Tensor::shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(p, j);
        }
    const int ia = a.node(), ib = b.node();
    return finish(tape, std::move(c), ia >= 0 || ib >= 0, [&](int self) {
        return [ia, ib, av = a.data(), bv = b.data(), m, k, n, self](GradArray& g) {
            const std::vector<double>& go = g[self];
            if (ia >= 0) {
                std::vector<double>& ga = g[ia];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gv = go[i * n + j];
                        if (gv == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gv * bv[p * n + j];
                    }
            }
            if (ib >= 0) {
                std::vector<double>& gb = g[ib];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double a2 = av[i * k + p];
                        if (a2 == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += a2 * go[i * n + j];
                    }
            }
        };
    });
}

Tensor elementwise(Tape& tape, const Tensor& a, const Tensor& b, Elementwise kind) {
    const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
    if (!a.same_shape(b) && !a_scalar && !b_scalar)
        throw DimensionError("elementwise shapes differ: " + Tensor::shape_str(a.shape()) +
                             " vs " + Tensor::shape_str(b.shape()));
    const Tensor& big = b_scalar ? a : b;
    const std::size_t n = big.numel();
    Tensor c(big.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a_scalar ? a[0] : a[i];
        const double y = b_scalar ? b[0] : b[i];
        switch (kind) {
            case Elementwise::add: c[i] = x + y; break;
            case Elementwise::sub: c[i] = x - y; break;
            case Elementwise::mul: c[i] = x * y; break;
        }
    }
    const int ia = a.node(), ib = b.node();
    return finish(tape, std::move(c), ia >= 0 || ib >= 0, [&](int self) {
        return [ia, ib, a_scalar, b_scalar, av = a.data(), bv = b.data(), n, kind,
                self](GradArray& g) {
            const std::vector<double>& go = g[self];
            for (std::size_t i = 0; i < n; ++i) {
                const double gv = go[i];
                if (ia >= 0) {
                    double da = gv;
                    if (kind == Elementwise::mul) da *= b_scalar ? bv[0] : bv[i];
                    g[ia][a_scalar ? 0 : i] += da;
                }
                if (ib >= 0) {
                    double db = kind == Elementwise::sub ? -gv : gv;
                    if (kind == Elementwise::mul) db = gv * (a_scalar ? av[0] : av[i]);
                    g[ib][b_scalar ? 0 : i] += db;
                }
            }
        };
    });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return elementwise(tape, a, b, Elementwise::add); }
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) { return elementwise(tape, a, b, Elementwise::sub); }
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) { return elementwise(tape, a, b, Elementwise::mul); }

Tensor scale(Tape& tape, const Tensor& a, double s) {
    return elementwise(tape, a, Tensor::scalar(s), Elementwise::mul);
}

Tensor add_const(Tape& tape, const Tensor& a, double c) {
    return elementwise(tape, a, Tensor::scalar(c), Elementwise::add);
}

Tensor activation(Tape& tape, const Tensor& a, Activation kind) {
    const std::size_t n = a.numel();
    Tensor c(a.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a[i];
        switch (kind) {
            case Activation::relu: c[i] = x > 0.0 ? x : 0.0; break;
            case Activation::tanh: c[i] = std::tanh(x); break;
            case Activation::sigmoid: c[i] = 1.0 / (1.0 + std::exp(-x)); break;
            case Activation::log: c[i] = std::log(std::max(x, kLogEps)); break;
        }
    }
    const int ia = a.node();
    return finish(tape, std::move(c), ia >= 0, [&](int self) {
        return [ia, av = a.data(), n, kind, self](GradArray& g) {
            const std::vector<double>& go = g[self];
            std::vector<double>& ga = g[ia];
            for (std::size_t i = 0; i < n; ++i) {
                double d = 0.0;
                switch (kind) {
                    case Activation::relu: d = av[i] > 0.0 ? 1.0 : 0.0; break;
                    case Activation::tanh: {
                        const double t = std::tanh(av[i]);
                        d = 1.0 - t * t;
                        break;
                    }
                    case Activation::sigmoid: {
                        const double s = 1.0 / (1.0 + std::exp(-av[i]));
                        d = s * (1.0 - s);
                        break;
                    }
                    case Activation::log: d = av[i] > kLogEps ? 1.0 / av[i] : 0.0; break;
                }
                ga[i] += go[i] * d;
            }
        };
    });
}

Tensor relu(Tape& tape, const Tensor& a) { return activation(tape, a, Activation::relu); }
Tensor tanh_act(Tape& tape, const Tensor& a) { return activation(tape, a, Activation::tanh); }
Tensor sigmoid(Tape& tape, const Tensor& a) { return activation(tape, a, Activation::sigmoid); }
Tensor log_clamped(Tape& tape, const Tensor& a) { return activation(tape, a, Activation::log); }

Tensor softmax_rows(Tape& tape, const Tensor& a) {
    check_rank2(a, "softmax_rows");
    check_nonempty(a, "softmax_rows");
    const std::size_t m = a.rows(), c = a.cols();
    Tensor y({m, c});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = a.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            y.at(i, j) = std::exp(a.at(i, j) - mx);
            z += y.at(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) y.at(i, j) /= z;
    }
    const int ia = a.node();
    auto yv = y.data();
    return finish(tape, std::move(y), ia >= 0, [&](int self) {
        return [ia, yv = std::move(yv), m, c, self](GradArray& g) {
            const std::vector<double>& go = g[self];
            std::vector<double>& ga = g[ia];
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += go[i * c + j] * yv[i * c + j];
                for (std::size_t j = 0; j < c; ++j)
                    ga[i * c + j] += yv[i * c + j] * (go[i * c + j] - dot);
            }
        };
    });
}

Tensor reduce(Tape& tape, const Tensor& a, Reduction kind) {
    const std::size_t n = a.numel();
    if ((kind == Reduction::mean_all || kind == Reduction::mean_rows) && n == 0)
        throw DegenerateBatchError("mean of an empty tensor");
    Tensor out = Tensor::scalar(0.0);
    switch (kind) {
        case Reduction::mean_all: {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += a[i];
            out = Tensor::scalar(s / static_cast<double>(n));
            break;
        }
        case Reduction::mean_rows: {
            check_rank2(a, "mean_rows");
            const std::size_t m = a.rows(), c = a.cols();
            if (m == 0) throw DegenerateBatchError("mean_rows of an empty batch");
            Tensor r({1, c});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j) r[j] += a.at(i, j);
            for (std::size_t j = 0; j < c; ++j) r[j] /= static_cast<double>(m);
            out = std::move(r);
            break;
        }
        case Reduction::sum: {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += a[i];
            out = Tensor::scalar(s);
            break;
        }
        case Reduction::l1_norm: {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i]);
            out = Tensor::scalar(s);
            break;
        }
        case Reduction::l2_norm: {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
            out = Tensor::scalar(std::sqrt(s));
            break;
        }
    }
    const int ia = a.node();
    const std::size_t rows_n = a.rank() == 2 ? a.rows() : 0;
    const std::size_t cols_n = a.rank() == 2 ? a.cols() : 0;
    const double norm_v = out.numel() == 1 ? out[0] : 0.0;
    return finish(tape, std::move(out), ia >= 0, [&](int self) {
        return [ia, av = a.data(), n, rows_n, cols_n, kind, norm_v, self](GradArray& g) {
            const std::vector<double>& go = g[self];
            std::vector<double>& ga = g[ia];
            switch (kind) {
                case Reduction::mean_all: {
                    const double gv = go[0] / static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i) ga[i] += gv;
                    break;
                }
                case Reduction::mean_rows: {
                    const double inv_m = 1.0 / static_cast<double>(rows_n);
                    for (std::size_t i = 0; i < rows_n; ++i)
                        for (std::size_t j = 0; j < cols_n; ++j)
                            ga[i * cols_n + j] += go[j] * inv_m;
                    break;
                }
                case Reduction::sum:
                    for (std::size_t i = 0; i < n; ++i) ga[i] += go[0];
                    break;
                case Reduction::l1_norm:
                    for (std::size_t i = 0; i < n; ++i) {
                        const double s = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
                        ga[i] += go[0] * s;
                    }
                    break;
                case Reduction::l2_norm:
                    // Subgradient 0 at the origin keeps everything finite.
                    if (norm_v > 0.0)
                        for (std::size_t i = 0; i < n; ++i) ga[i] += go[0] * av[i] / norm_v;
                    break;
            }
        };
    });
}

Tensor mean_all(Tape& tape, const Tensor& a) { return reduce(tape, a, Reduction::mean_all); }
Tensor mean_rows(Tape& tape, const Tensor& a) { return reduce(tape, a, Reduction::mean_rows); }
Tensor sum_all(Tape& tape, const Tensor& a) { return reduce(tape, a, Reduction::sum); }
Tensor l1_norm(Tape& tape, const Tensor& a) { return reduce(tape, a, Reduction::l1_norm); }
Tensor l2_norm(Tape& tape, const Tensor& a) { return reduce(tape, a, Reduction::l2_norm); }

}  // namespace bdg::ad

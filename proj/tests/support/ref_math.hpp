#pragma once

// Reference implementations used as independent oracles: plain double loops
// over std::vector, no Tensor, no Tape. Deliberately duplicates the math.

#include <algorithm>
#include <cmath>
#include <vector>

namespace testsupport::ref {

using Mat = std::vector<std::vector<double>>;

inline Mat matmul(const Mat& a, const Mat& b) {
    const std::size_t m = a.size(), k = b.size(), n = b[0].size();
    Mat c(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) c[i][j] += a[i][p] * b[p][j];
    return c;
}

inline std::vector<double> col_means(const Mat& a) {
    std::vector<double> mean(a[0].size(), 0.0);
    for (const auto& row : a)
        for (std::size_t j = 0; j < row.size(); ++j) mean[j] += row[j];
    for (auto& v : mean) v /= static_cast<double>(a.size());
    return mean;
}

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Forward pass of the two-layer relu trunk + heads, mirroring the classifier
// but written directly against weight vectors.
struct RefLinear {
    Mat w;                  // in x out
    std::vector<double> b;  // out
};

inline std::vector<double> affine(const RefLinear& l, const std::vector<double>& x) {
    std::vector<double> out(l.b);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += x[i] * l.w[i][j];
    return out;
}

inline std::vector<double> relu(std::vector<double> v) {
    for (auto& x : v) x = std::max(x, 0.0);
    return v;
}

inline std::vector<double> tanh_vec(std::vector<double> v) {
    for (auto& x : v) x = std::tanh(x);
    return v;
}

inline std::vector<double> softmax(std::vector<double> v) {
    double mx = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (auto& x : v) {
        x = std::exp(x - mx);
        z += x;
    }
    for (auto& x : v) x /= z;
    return v;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double log_clamped(double p) { return std::log(std::max(p, 1e-7)); }

}  // namespace testsupport::ref

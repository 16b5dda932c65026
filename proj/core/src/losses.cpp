#include "bdg/losses.hpp"

#include <string>

#include "bdg/errors.hpp"

namespace bdg::losses {

using ad::Tape;
using ad::Tensor;

namespace {

void check_labels(const std::vector<int>& labels, int classes, const char* who) {
    for (int y : labels)
        if (y < 0 || y >= classes)
            throw ValidationError(std::string(who) + ": label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(classes) + ")");
}

void check_batch(const Tensor& x, const std::vector<int>& labels, const char* who) {
    if (x.rows() == 0) throw DegenerateBatchError(std::string(who) + ": empty batch");
    if (!labels.empty() && labels.size() != x.rows())
        throw DimensionError(std::string(who) + ": label count " +
                             std::to_string(labels.size()) + " does not match batch rows " +
                             std::to_string(x.rows()));
}

}  // namespace

BatchBundle make_bundle(Tape& tape, const nn::Generator& g_s, const nn::Generator& g_t,
                        Tensor x_s, std::vector<int> y_s, Tensor x_t, std::vector<int> yhat_t,
                        int classes) {
    check_batch(x_s, y_s, "make_bundle(source)");
    check_batch(x_t, yhat_t, "make_bundle(target)");
    check_labels(y_s, classes, "make_bundle(y_s)");
    check_labels(yhat_t, classes, "make_bundle(yhat_t)");
    BatchBundle b;
    b.f_t = g_s.forward(tape, x_s);
    b.f_s = g_t.forward(tape, x_t);
    b.x_s = std::move(x_s);
    b.y_s = std::move(y_s);
    b.x_t = std::move(x_t);
    b.yhat_t = std::move(yhat_t);
    b.classes = classes;
    return b;
}

Tensor cross_entropy(Tape& tape, const Tensor& class_probs, const std::vector<int>& labels) {
    const std::size_t m = class_probs.rows(), c = class_probs.cols();
    if (m == 0) throw DegenerateBatchError("cross_entropy: empty batch");
    if (labels.size() != m)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(m) + " rows");
    check_labels(labels, static_cast<int>(c), "cross_entropy");
    // One-hot mask, row-summed through a ones column: picks p[i, y_i] while
    // keeping the gradient path through the probabilities.
    Tensor mask({m, c});
    for (std::size_t i = 0; i < m; ++i) mask.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    Tensor picked = ad::matmul(tape, ad::mul(tape, class_probs, mask), Tensor::full(c, 1, 1.0));
    return ad::scale(tape, ad::mean_all(tape, ad::log_clamped(tape, picked)), -1.0);
}

Tensor binary_cross_entropy(Tape& tape, const Tensor& probs, double target) {
    if (probs.rows() == 0) throw DegenerateBatchError("binary_cross_entropy: empty batch");
    Tensor p = probs;
    if (target < 0.5) {
        Tensor ones = Tensor::full(probs.rows(), probs.cols(), 1.0);
        p = ad::sub(tape, ones, probs);
    }
    return ad::scale(tape, ad::mean_all(tape, ad::log_clamped(tape, p)), -1.0);
}

Tensor source_gan_loss(Tape& tape, const nn::Classifier& c, const Tensor& x_real,
                       const std::vector<int>& y_real, const Tensor& f_fake,
                       const std::vector<int>& y_fake, Side side) {
    check_batch(x_real, y_real, "source_gan_loss(real)");
    check_batch(f_fake, y_fake, "source_gan_loss(fake)");
    nn::ClassifierOut fake_out = c.forward(tape, f_fake);
    if (side == Side::classifier) {
        nn::ClassifierOut real_out = c.forward(tape, x_real);
        Tensor dis = ad::add(tape, binary_cross_entropy(tape, real_out.domain_prob, 1.0),
                             binary_cross_entropy(tape, fake_out.domain_prob, 0.0));
        Tensor cls = ad::add(tape, cross_entropy(tape, real_out.class_probs, y_real),
                             cross_entropy(tape, fake_out.class_probs, y_fake));
        return ad::add(tape, dis, cls);
    }
    Tensor dis = binary_cross_entropy(tape, fake_out.domain_prob, 1.0);
    Tensor cls = cross_entropy(tape, fake_out.class_probs, y_fake);
    return ad::add(tape, dis, cls);
}

Tensor source_gan_loss(Tape& tape, const nn::Classifier& c_s, const BatchBundle& bundle,
                       Side side) {
    return source_gan_loss(tape, c_s, bundle.x_s, bundle.y_s, bundle.f_t, bundle.y_s, side);
}

Tensor target_gan_loss(Tape& tape, const nn::Classifier& c_t, const Tensor& f_t,
                       const std::vector<int>& y_s, const Tensor& f_s,
                       const std::vector<int>& yhat_t, Side side) {
    check_batch(f_t, y_s, "target_gan_loss(f_t)");
    check_batch(f_s, yhat_t, "target_gan_loss(f_s)");
    nn::ClassifierOut ft_out = c_t.forward(tape, f_t);
    nn::ClassifierOut fs_out = c_t.forward(tape, f_s);
    Tensor dis = side == Side::classifier
                     ? ad::add(tape, binary_cross_entropy(tape, ft_out.domain_prob, 1.0),
                               binary_cross_entropy(tape, fs_out.domain_prob, 0.0))
                     : ad::add(tape, binary_cross_entropy(tape, fs_out.domain_prob, 1.0),
                               binary_cross_entropy(tape, ft_out.domain_prob, 0.0));
    Tensor cls = ad::add(tape, cross_entropy(tape, ft_out.class_probs, y_s),
                         cross_entropy(tape, fs_out.class_probs, yhat_t));
    return ad::add(tape, dis, cls);
}

Tensor target_gan_loss(Tape& tape, const nn::Classifier& c_t, const BatchBundle& bundle,
                       Side side) {
    return target_gan_loss(tape, c_t, bundle.f_t, bundle.y_s, bundle.f_s, bundle.yhat_t, side);
}

Tensor global_mmd(Tape& tape, const Tensor& f, const Tensor& x) {
    if (f.rows() == 0 || x.rows() == 0) throw DegenerateBatchError("global_mmd: empty set");
    if (f.cols() != x.cols())
        throw DimensionError("global_mmd width mismatch: " + Tensor::shape_str(f.shape()) +
                             " vs " + Tensor::shape_str(x.shape()));
    return ad::l2_norm(tape, ad::sub(tape, ad::mean_rows(tape, f), ad::mean_rows(tape, x)));
}

namespace {

// 1/n_c selector row for class c; zero row when the class is absent.
Tensor class_mean_selector(const std::vector<int>& labels, int c, std::size_t rows,
                           std::size_t* count_out) {
    Tensor sel({1, rows});
    std::size_t n_c = 0;
    for (std::size_t i = 0; i < rows; ++i)
        if (labels[i] == c) ++n_c;
    if (n_c > 0) {
        const double w = 1.0 / static_cast<double>(n_c);
        for (std::size_t i = 0; i < rows; ++i)
            if (labels[i] == c) sel[0 * rows + i] = w;
    }
    *count_out = n_c;
    return sel;
}

}  // namespace

ClassMmdResult class_mmd(Tape& tape, const Tensor& f, const std::vector<int>& labels_f,
                         const Tensor& x, const std::vector<int>& labels_x, int classes) {
    if (f.rows() == 0 || x.rows() == 0) throw DegenerateBatchError("class_mmd: empty set");
    if (labels_f.size() != f.rows() || labels_x.size() != x.rows())
        throw DimensionError("class_mmd: label counts do not match row counts");
    check_labels(labels_f, classes, "class_mmd");
    check_labels(labels_x, classes, "class_mmd");
    ClassMmdResult result;
    Tensor acc = Tensor::scalar(0.0);
    bool any = false;
    for (int c = 0; c < classes; ++c) {
        std::size_t nf = 0, nx = 0;
        Tensor sel_f = class_mean_selector(labels_f, c, f.rows(), &nf);
        Tensor sel_x = class_mean_selector(labels_x, c, x.rows(), &nx);
        if (nf == 0 || nx == 0) {
            ++result.skipped_classes;
            continue;
        }
        Tensor mean_f = ad::matmul(tape, sel_f, f);
        Tensor mean_x = ad::matmul(tape, sel_x, x);
        Tensor dist = ad::l2_norm(tape, ad::sub(tape, mean_f, mean_x));
        acc = any ? ad::add(tape, acc, dist) : dist;
        any = true;
    }
    result.no_overlap = !any;
    result.value = std::move(acc);
    return result;
}

MmdResult mmd_loss(Tape& tape, Branch branch, const BatchBundle& bundle) {
    const Tensor& f = branch == Branch::source ? bundle.f_t : bundle.f_s;
    const Tensor& x = branch == Branch::source ? bundle.x_t : bundle.x_s;
    const std::vector<int>& labels_f = branch == Branch::source ? bundle.y_s : bundle.yhat_t;
    const std::vector<int>& labels_x = branch == Branch::source ? bundle.yhat_t : bundle.y_s;
    Tensor g = global_mmd(tape, f, x);
    ClassMmdResult c = class_mmd(tape, f, labels_f, x, labels_x, bundle.classes);
    Tensor scaled = ad::scale(tape, c.value, 1.0 / static_cast<double>(bundle.classes));
    return {ad::add(tape, g, scaled), c.skipped_classes};
}

Tensor consistency_loss(Tape& tape, const nn::Classifier& c_t, const nn::Classifier& c_s,
                        const Tensor& f_s) {
    if (f_s.rows() == 0) throw DegenerateBatchError("consistency_loss: empty batch");
    nn::ClassifierOut out_t = c_t.forward(tape, f_s);
    nn::ClassifierOut out_s = c_s.forward(tape, f_s);
    Tensor diff = ad::sub(tape, out_t.class_probs, out_s.class_probs);
    return ad::scale(tape, ad::l1_norm(tape, diff), 1.0 / static_cast<double>(f_s.rows()));
}

TotalLoss total_loss(Tape& tape, const nn::Classifier& c_s, const nn::Classifier& c_t,
                     const BatchBundle& bundle, double lambda, double gamma, Side side) {
    TotalLoss out;
    Tensor gan_s = source_gan_loss(tape, c_s, bundle, side);
    Tensor gan_t = target_gan_loss(tape, c_t, bundle, side);
    out.gan_s = gan_s.value();
    out.gan_t = gan_t.value();
    Tensor total = ad::add(tape, gan_s, gan_t);
    if (side == Side::generator) {
        MmdResult mmd_s = mmd_loss(tape, Branch::source, bundle);
        MmdResult mmd_t = mmd_loss(tape, Branch::target, bundle);
        out.mmd_s = mmd_s.value.value();
        out.mmd_t = mmd_t.value.value();
        out.skipped_classes = mmd_s.skipped_classes + mmd_t.skipped_classes;
        Tensor mmd_sum = ad::add(tape, mmd_s.value, mmd_t.value);
        total = ad::add(tape, total, ad::scale(tape, mmd_sum, lambda));
    }
    Tensor con = consistency_loss(tape, c_t, c_s, bundle.f_s);
    out.con = con.value();
    total = ad::add(tape, total, ad::scale(tape, con, gamma));
    out.value = std::move(total);
    return out;
}

Tensor pretrain_loss(Tape& tape, const nn::Classifier& c0, const Tensor& x_s,
                     const std::vector<int>& y_s) {
    check_batch(x_s, y_s, "pretrain_loss");
    nn::ClassifierOut out = c0.forward(tape, x_s);
    return cross_entropy(tape, out.class_probs, y_s);
}

}  // namespace bdg::losses

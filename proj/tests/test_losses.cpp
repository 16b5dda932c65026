#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "bdg/losses.hpp"
#include "bdg/nn.hpp"
#include "bdg/tensor.hpp"
#include "support/finite_diff.hpp"
#include "support/ref_models.hpp"

using namespace bdg;
using namespace bdg::ad;
using namespace bdg::losses;
namespace ref = testsupport::ref;
using testsupport::random_tensor;

namespace {

nn::Classifier make_classifier(std::uint64_t seed, std::size_t d = 2, std::size_t h = 8,
                               std::size_t c = 3) {
    nn::Classifier cl(d, h, c);
    Rng rng(seed);
    cl.init(rng);
    return cl;
}

nn::Generator make_generator(std::uint64_t seed, std::size_t d = 2, std::size_t h = 8) {
    nn::Generator g(d, h);
    Rng rng(seed);
    g.init(rng);
    return g;
}

struct Fixture {
    nn::Generator g_s = make_generator(101);
    nn::Generator g_t = make_generator(102);
    nn::Classifier c_s = make_classifier(103);
    nn::Classifier c_t = make_classifier(104);
    Tensor x_s, x_t;
    std::vector<int> y_s, yhat_t;
    int classes = 3;

    explicit Fixture(std::size_t n_s = 4, std::size_t n_t = 4, std::uint64_t seed = 900) {
        Rng rng(seed);
        x_s = random_tensor(rng, n_s, 2, -2.0, 2.0);
        x_t = random_tensor(rng, n_t, 2, -2.0, 2.0);
        for (std::size_t i = 0; i < n_s; ++i) y_s.push_back(static_cast<int>(i % 3));
        for (std::size_t i = 0; i < n_t; ++i) yhat_t.push_back(static_cast<int>((i + 1) % 3));
    }

    BatchBundle bundle(Tape& tape) const {
        return make_bundle(tape, g_s, g_t, x_s, y_s, x_t, yhat_t, classes);
    }
};

}  // namespace

TEST_CASE("binary cross-entropy saturates to ~0 for a perfect discriminator") {
    Tape tape;
    // sigmoid outputs never quite reach the endpoints; use near-saturated probs
    const double near_one = 1.0 - 1e-9;
    Tensor sure_real = Tensor::matrix(2, 1, {near_one, near_one});
    Tensor sure_fake = Tensor::matrix(2, 1, {1e-9, 1e-9});
    double dis = binary_cross_entropy(tape, sure_real, 1.0).value() +
                 binary_cross_entropy(tape, sure_fake, 0.0).value();
    CHECK(std::abs(dis) < 1e-6);
    CHECK(dis >= 0.0);

    // exact endpoints stay finite thanks to the log clamp
    Tensor hard = Tensor::matrix(1, 1, {0.0});
    CHECK(std::isfinite(binary_cross_entropy(tape, hard, 1.0).value()));
}

TEST_CASE("cross-entropy of uniform rows equals log C") {
    Tape tape;
    const std::size_t c = 5;
    Tensor probs = Tensor::full(4, c, 1.0 / static_cast<double>(c));
    double v = cross_entropy(tape, probs, {0, 1, 2, 3}).value();
    CHECK(v == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
}

TEST_CASE("source gan loss matches a per-sample re-derivation") {
    Fixture f;
    Tape tape;
    BatchBundle b = f.bundle(tape);
    const double cls_side = source_gan_loss(tape, f.c_s, b, Side::classifier).value();
    const double gen_side = source_gan_loss(tape, f.c_s, b, Side::generator).value();

    // independent path: plain-loop forwards, hand-summed -log terms
    ref::Mat ft = ref::generator_forward_batch(f.g_s, f.x_s);
    double dis = 0.0, cls_real = 0.0, cls_fake = 0.0, gen_dis = 0.0;
    const double n_s = static_cast<double>(f.x_s.rows());
    for (std::size_t i = 0; i < f.x_s.rows(); ++i) {
        auto real = ref::classifier_forward(f.c_s, ref::tensor_row(f.x_s, i));
        auto fake = ref::classifier_forward(f.c_s, ft[i]);
        dis += -ref::log_clamped(real.domain_prob) - ref::log_clamped(1.0 - fake.domain_prob);
        cls_real += -ref::log_clamped(real.class_probs[static_cast<std::size_t>(f.y_s[i])]);
        cls_fake += -ref::log_clamped(fake.class_probs[static_cast<std::size_t>(f.y_s[i])]);
        gen_dis += -ref::log_clamped(fake.domain_prob);
    }
    CHECK(cls_side == doctest::Approx((dis + cls_real + cls_fake) / n_s).epsilon(1e-10));
    CHECK(gen_side == doctest::Approx((gen_dis + cls_fake) / n_s).epsilon(1e-10));
}

TEST_CASE("target gan loss: coin-flip discriminator gives 2 log 2 + class terms") {
    // zeroed heads: domain logit 0 -> p=0.5; class logits 0 -> uniform
    nn::Classifier c_t = make_classifier(7);
    for (double& v : c_t.domain_head.w.data()) v = 0.0;
    for (double& v : c_t.domain_head.b.data()) v = 0.0;
    for (double& v : c_t.class_head.w.data()) v = 0.0;
    for (double& v : c_t.class_head.b.data()) v = 0.0;

    Fixture f;
    Tape tape;
    BatchBundle b = f.bundle(tape);
    const double v = target_gan_loss(tape, c_t, b, Side::classifier).value();
    const double expect = 2.0 * std::log(2.0) + 2.0 * std::log(3.0);
    CHECK(v == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("target gan loss matches a per-sample re-derivation on both sides") {
    Fixture f;
    Tape tape;
    BatchBundle b = f.bundle(tape);
    const double cls_side = target_gan_loss(tape, f.c_t, b, Side::classifier).value();
    const double gen_side = target_gan_loss(tape, f.c_t, b, Side::generator).value();

    ref::Mat ft = ref::generator_forward_batch(f.g_s, f.x_s);
    ref::Mat fs = ref::generator_forward_batch(f.g_t, f.x_t);
    const double n_s = static_cast<double>(ft.size()), n_t = static_cast<double>(fs.size());
    double dis_cls = 0.0, dis_gen = 0.0, cls_ft = 0.0, cls_fs = 0.0;
    for (std::size_t i = 0; i < ft.size(); ++i) {
        auto out = ref::classifier_forward(f.c_t, ft[i]);
        dis_cls += -ref::log_clamped(out.domain_prob) / n_s;
        dis_gen += -ref::log_clamped(1.0 - out.domain_prob) / n_s;
        cls_ft += -ref::log_clamped(out.class_probs[static_cast<std::size_t>(f.y_s[i])]) / n_s;
    }
    for (std::size_t i = 0; i < fs.size(); ++i) {
        auto out = ref::classifier_forward(f.c_t, fs[i]);
        dis_cls += -ref::log_clamped(1.0 - out.domain_prob) / n_t;
        dis_gen += -ref::log_clamped(out.domain_prob) / n_t;
        cls_fs += -ref::log_clamped(out.class_probs[static_cast<std::size_t>(f.yhat_t[i])]) / n_t;
    }
    CHECK(cls_side == doctest::Approx(dis_cls + cls_ft + cls_fs).epsilon(1e-10));
    CHECK(gen_side == doctest::Approx(dis_gen + cls_ft + cls_fs).epsilon(1e-10));
}

TEST_CASE("global mmd: identical sets, singleton means, brute force") {
    Tape tape;
    Rng rng(21);
    Tensor a = random_tensor(rng, 5, 3);
    CHECK(global_mmd(tape, a, a).value() == 0.0);

    Tensor origin = Tensor::matrix(1, 2, {0.0, 0.0});
    Tensor p34 = Tensor::matrix(1, 2, {3.0, 4.0});
    CHECK(global_mmd(tape, origin, p34).value() == doctest::Approx(5.0).epsilon(1e-15));

    Tensor f = random_tensor(rng, 7, 3);
    Tensor x = random_tensor(rng, 5, 3);
    ref::Mat fm, xm;
    for (std::size_t i = 0; i < 7; ++i) fm.push_back(ref::tensor_row(f, i));
    for (std::size_t i = 0; i < 5; ++i) xm.push_back(ref::tensor_row(x, i));
    const double expect = ref::euclidean(ref::col_means(fm), ref::col_means(xm));
    CHECK(global_mmd(tape, f, x).value() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("global mmd properties: symmetry, non-negativity, homogeneity") {
    Rng rng(22);
    for (int k = 0; k < 20; ++k) {
        Tape tape;
        Tensor a = random_tensor(rng, 6, 2);
        Tensor b = random_tensor(rng, 4, 2);
        const double ab = global_mmd(tape, a, b).value();
        const double ba = global_mmd(tape, b, a).value();
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab >= 0.0);

        const double s = rng.uniform(-3.0, 3.0);
        Tape t2;
        Tensor sa = scale(t2, a, s);
        Tensor sb = scale(t2, b, s);
        CHECK(global_mmd(t2, sa, sb).value() ==
              doctest::Approx(std::abs(s) * ab).epsilon(1e-10));
    }
}

TEST_CASE("global mmd is zero iff the means coincide") {
    Tape tape;
    // different sets, same mean
    Tensor a = Tensor::matrix(2, 2, {1.0, 0.0, -1.0, 0.0});
    Tensor b = Tensor::matrix(2, 2, {2.0, 0.0, -2.0, 0.0});
    CHECK(global_mmd(tape, a, b).value() == 0.0);
    Tensor c = Tensor::matrix(1, 2, {0.1, 0.0});
    CHECK(global_mmd(tape, a, c).value() > 0.0);
}

TEST_CASE("class mmd: identical labeled sets give zero") {
    Tape tape;
    Rng rng(23);
    Tensor a = random_tensor(rng, 6, 2);
    std::vector<int> labels = {0, 1, 2, 0, 1, 2};
    ClassMmdResult r = class_mmd(tape, a, labels, a, labels, 3);
    CHECK(r.value.value() == 0.0);
    CHECK(r.skipped_classes == 0);
    CHECK_FALSE(r.no_overlap);
}

TEST_CASE("class mmd with one class collapses to global mmd") {
    Tape tape;
    Rng rng(24);
    Tensor f = random_tensor(rng, 5, 3);
    Tensor x = random_tensor(rng, 7, 3);
    std::vector<int> lf(5, 0), lx(7, 0);
    ClassMmdResult r = class_mmd(tape, f, lf, x, lx, 1);
    CHECK(r.value.value() == doctest::Approx(global_mmd(tape, f, x).value()).epsilon(1e-15));
}

TEST_CASE("class mmd matches per-class brute force on a hand partition") {
    Tape tape;
    Tensor f = Tensor::matrix(6, 2, {0, 1, 2, 0, 1, 1, 5, 5, 4, 6, 6, 4});
    Tensor x = Tensor::matrix(6, 2, {1, 1, 0, 0, 2, 2, 7, 5, 5, 7, 6, 6});
    std::vector<int> lf = {0, 0, 0, 1, 1, 1};
    std::vector<int> lx = {0, 0, 0, 1, 1, 1};
    ClassMmdResult r = class_mmd(tape, f, lf, x, lx, 2);

    double expect = 0.0;
    for (int c = 0; c < 2; ++c) {
        ref::Mat fc, xc;
        for (std::size_t i = 0; i < 6; ++i) {
            if (lf[i] == c) fc.push_back(ref::tensor_row(f, i));
            if (lx[i] == c) xc.push_back(ref::tensor_row(x, i));
        }
        expect += ref::euclidean(ref::col_means(fc), ref::col_means(xc));
    }
    CHECK(r.value.value() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("class mmd skips one-sided classes and flags empty overlap") {
    Tape tape;
    Tensor f = Tensor::matrix(2, 2, {0, 0, 1, 1});
    Tensor x = Tensor::matrix(2, 2, {5, 5, 6, 6});
    ClassMmdResult partial = class_mmd(tape, f, {0, 0}, x, {0, 1}, 3);
    CHECK(partial.skipped_classes == 2);  // class 1 absent in f, class 2 in both
    CHECK_FALSE(partial.no_overlap);

    ClassMmdResult none = class_mmd(tape, f, {0, 0}, x, {1, 1}, 2);
    CHECK(none.no_overlap);
    CHECK(none.value.value() == 0.0);
    CHECK(none.skipped_classes == 2);
}

TEST_CASE("mmd loss recomposes from its parts in both branches") {
    Fixture f;
    for (auto branch : {Branch::source, Branch::target}) {
        Tape tape;
        BatchBundle b = f.bundle(tape);
        MmdResult whole = mmd_loss(tape, branch, b);

        Tape t2;
        BatchBundle b2 = f.bundle(t2);
        const Tensor& fs = branch == Branch::source ? b2.f_t : b2.f_s;
        const Tensor& xs = branch == Branch::source ? b2.x_t : b2.x_s;
        const auto& lf = branch == Branch::source ? b2.y_s : b2.yhat_t;
        const auto& lx = branch == Branch::source ? b2.yhat_t : b2.y_s;
        const double g = global_mmd(t2, fs, xs).value();
        const double c = class_mmd(t2, fs, lf, xs, lx, f.classes).value.value();
        CHECK(whole.value.value() ==
              doctest::Approx(g + c / static_cast<double>(f.classes)).epsilon(1e-12));
    }
}

TEST_CASE("mmd loss vanishes when both sets and labels coincide") {
    Fixture f;
    Tape tape;
    BatchBundle b;
    b.x_s = f.x_s;
    b.y_s = f.y_s;
    b.x_t = f.x_s;
    b.yhat_t = f.y_s;
    b.f_t = f.x_s;  // pretend the generators are exact
    b.f_s = f.x_s;
    b.classes = f.classes;
    CHECK(mmd_loss(tape, Branch::source, b).value.value() == 0.0);
    CHECK(mmd_loss(tape, Branch::target, b).value.value() == 0.0);
}

TEST_CASE("consistency loss: identical classifiers give exactly zero") {
    nn::Classifier a = make_classifier(55);
    nn::Classifier b = make_classifier(55);
    Rng rng(56);
    Tensor fs = random_tensor(rng, 5, 2);
    Tape tape;
    CHECK(consistency_loss(tape, a, b, fs).value() == 0.0);
    CHECK(consistency_loss(tape, a, a, fs).value() == 0.0);
}

TEST_CASE("consistency loss: disjoint one-hot predictions differ by 2") {
    nn::Classifier a = make_classifier(57, 2, 8, 2);
    nn::Classifier b = make_classifier(58, 2, 8, 2);
    // constant class logits via bias-only heads
    for (double& v : a.class_head.w.data()) v = 0.0;
    for (double& v : b.class_head.w.data()) v = 0.0;
    a.class_head.b.data() = {50.0, 0.0};
    b.class_head.b.data() = {0.0, 50.0};
    Rng rng(59);
    Tensor fs = random_tensor(rng, 6, 2);
    Tape tape;
    CHECK(consistency_loss(tape, a, b, fs).value() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("consistency loss is symmetric and matches a per-row oracle") {
    Fixture f;
    Rng rng(60);
    Tensor fs = random_tensor(rng, 5, 2);
    Tape tape;
    const double ts = consistency_loss(tape, f.c_t, f.c_s, fs).value();
    const double st = consistency_loss(tape, f.c_s, f.c_t, fs).value();
    CHECK(ts == doctest::Approx(st).epsilon(1e-15));

    double expect = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        auto pt = ref::classifier_forward(f.c_t, ref::tensor_row(fs, i));
        auto ps = ref::classifier_forward(f.c_s, ref::tensor_row(fs, i));
        for (std::size_t j = 0; j < pt.class_probs.size(); ++j)
            expect += std::abs(pt.class_probs[j] - ps.class_probs[j]);
    }
    CHECK(ts == doctest::Approx(expect / 5.0).epsilon(1e-12));
}

TEST_CASE("total loss: lambda=gamma=0 equals the bare gan sum") {
    Fixture f;
    Tape tape;
    BatchBundle b = f.bundle(tape);
    TotalLoss total = total_loss(tape, f.c_s, f.c_t, b, 0.0, 0.0, Side::generator);

    Tape t2;
    BatchBundle b2 = f.bundle(t2);
    const double gs = source_gan_loss(t2, f.c_s, b2, Side::generator).value();
    const double gt = target_gan_loss(t2, f.c_t, b2, Side::generator).value();
    CHECK(total.value.value() == gs + gt);
}

TEST_CASE("total loss recomposes from independently computed terms") {
    Fixture f;
    const double lambda = 0.7, gamma = 1.3;
    Tape tape;
    BatchBundle b = f.bundle(tape);
    TotalLoss total = total_loss(tape, f.c_s, f.c_t, b, lambda, gamma, Side::generator);

    Tape t2;
    BatchBundle b2 = f.bundle(t2);
    const double gs = source_gan_loss(t2, f.c_s, b2, Side::generator).value();
    const double gt = target_gan_loss(t2, f.c_t, b2, Side::generator).value();
    const double ms = mmd_loss(t2, Branch::source, b2).value.value();
    const double mt = mmd_loss(t2, Branch::target, b2).value.value();
    const double con = consistency_loss(t2, f.c_t, f.c_s, b2.f_s).value();
    CHECK(total.value.value() ==
          doctest::Approx(gs + gt + lambda * (ms + mt) + gamma * con).epsilon(1e-12));
    CHECK(total.gan_s == doctest::Approx(gs));
    CHECK(total.mmd_t == doctest::Approx(mt));
    CHECK(total.con == doctest::Approx(con));
}

TEST_CASE("total loss is linear in lambda: finite differences recover the mmd sum") {
    Fixture f;
    auto value_at = [&](double lam) {
        Tape tape;
        BatchBundle b = f.bundle(tape);
        return total_loss(tape, f.c_s, f.c_t, b, lam, 1.0, Side::generator).value.value();
    };
    const double slope = (value_at(2.0) - value_at(1.0));
    Tape tape;
    BatchBundle b = f.bundle(tape);
    const double ms = mmd_loss(tape, Branch::source, b).value.value();
    const double mt = mmd_loss(tape, Branch::target, b).value.value();
    CHECK(slope == doctest::Approx(ms + mt).epsilon(1e-10));
}

TEST_CASE("classifier-side objective carries no mmd term in value or gradients") {
    Fixture f;
    auto run = [&](double lambda) {
        Tape tape;
        BatchBundle b = f.bundle(tape);
        TotalLoss total = total_loss(tape, f.c_s, f.c_t, b, lambda, 1.0, Side::classifier);
        tape.backward(total.value);
        std::vector<double> grads;
        for (auto* cl : {&f.c_s, &f.c_t})
            for (Tensor* p : cl->params()) {
                Tensor g = tape.grad_of(*p);
                grads.insert(grads.end(), g.data().begin(), g.data().end());
            }
        return std::make_pair(total.value.value(), grads);
    };
    auto [v0, g0] = run(0.0);
    auto [v9, g9] = run(9.0);
    CHECK(v0 == v9);
    REQUIRE(g0.size() == g9.size());
    for (std::size_t i = 0; i < g0.size(); ++i) CHECK(g0[i] == g9[i]);
}

TEST_CASE("pretrain loss: perfect fit ~0, uniform log C, per-sample oracle") {
    // bias-only class head aligned with the label makes a near-perfect fit
    nn::Classifier sharp = make_classifier(61, 2, 8, 3);
    for (double& v : sharp.class_head.w.data()) v = 0.0;
    sharp.class_head.b.data() = {60.0, 0.0, 0.0};
    Rng rng(62);
    Tensor xs = random_tensor(rng, 4, 2);
    Tape tape;
    CHECK(pretrain_loss(tape, sharp, xs, {0, 0, 0, 0}).value() < 1e-9);

    nn::Classifier uniform = make_classifier(63, 2, 8, 3);
    for (double& v : uniform.class_head.w.data()) v = 0.0;
    for (double& v : uniform.class_head.b.data()) v = 0.0;
    CHECK(pretrain_loss(tape, uniform, xs, {0, 1, 2, 0}).value() ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));

    nn::Classifier c0 = make_classifier(64, 2, 8, 3);
    Rng rng2(65);
    Tensor xs6 = random_tensor(rng2, 6, 2);
    std::vector<int> y6 = {0, 1, 2, 2, 1, 0};
    double expect = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        auto out = ref::classifier_forward(c0, ref::tensor_row(xs6, i));
        expect += -ref::log_clamped(out.class_probs[static_cast<std::size_t>(y6[i])]) / 6.0;
    }
    CHECK(pretrain_loss(tape, c0, xs6, y6).value() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("losses stay finite for extreme finite inputs") {
    Fixture f;
    Tensor huge = Tensor::matrix(2, 2, {1e6, -1e6, 1e6, 1e6});
    std::vector<int> labels = {0, 1};
    Tape tape;
    BatchBundle b = make_bundle(tape, f.g_s, f.g_t, huge, labels, huge, labels, 3);
    TotalLoss total = total_loss(tape, f.c_s, f.c_t, b, 1.0, 1.0, Side::generator);
    CHECK(std::isfinite(total.value.value()));
    CHECK(std::isfinite(source_gan_loss(tape, f.c_s, b, Side::classifier).value()));
}

TEST_CASE("empty batches raise degenerate-batch errors") {
    Fixture f;
    Tape tape;
    Tensor empty({0, 2});
    std::vector<int> none;
    CHECK_THROWS_AS(source_gan_loss(tape, f.c_s, empty, none, empty, none, Side::classifier),
                    DegenerateBatchError);
    CHECK_THROWS_AS(global_mmd(tape, empty, f.x_s), DegenerateBatchError);
    CHECK_THROWS_AS(consistency_loss(tape, f.c_t, f.c_s, empty), DegenerateBatchError);
    CHECK_THROWS_AS(pretrain_loss(tape, f.c_s, empty, none), DegenerateBatchError);
}

TEST_CASE("full generator-side gradient matches finite differences on an 8-sample bundle") {
    Fixture f(8, 8, 901);
    auto loss_value = [&]() {
        Tape tape;
        BatchBundle b = f.bundle(tape);
        return total_loss(tape, f.c_s, f.c_t, b, 1.0, 1.0, Side::generator).value.value();
    };

    std::vector<Tensor*> params;
    for (Tensor* p : f.g_s.params()) params.push_back(p);
    for (Tensor* p : f.g_t.params()) params.push_back(p);

    Tape tape;
    BatchBundle b = f.bundle(tape);
    TotalLoss total = total_loss(tape, f.c_s, f.c_t, b, 1.0, 1.0, Side::generator);
    tape.backward(total.value);
    for (Tensor* p : params) {
        Tensor analytic = tape.grad_of(*p);
        auto fd = testsupport::central_diff(*p, loss_value);
        CHECK(testsupport::max_rel_err(analytic.data(), fd) < 1e-3);
    }
}

#pragma once

#include <vector>

#include "bdg/nn.hpp"
#include "bdg/tensor.hpp"

namespace bdg::losses {

// Whose update a GAN term is being evaluated for. Classifier side uses the
// discriminating targets (real source samples vs generated ones); generator
// side flips the domain labels non-saturating style, which for the target
// branch means both sets swap their origin label at once.
enum class Side { classifier, generator };

enum class Branch { source, target };

// One training batch with its generated counterparts. f_t = G_s(x_s) carries
// the source labels; f_s = G_t(x_t) carries the pseudo labels.
struct BatchBundle {
    ad::Tensor x_s;
    std::vector<int> y_s;
    ad::Tensor x_t;
    std::vector<int> yhat_t;
    ad::Tensor f_t;
    ad::Tensor f_s;
    int classes = 0;
};

// Builds the bundle on the given tape, running both generators.
BatchBundle make_bundle(ad::Tape& tape, const nn::Generator& g_s, const nn::Generator& g_t,
                        ad::Tensor x_s, std::vector<int> y_s, ad::Tensor x_t,
                        std::vector<int> yhat_t, int classes);

// Mean cross-entropy of class probabilities against integer labels.
ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& class_probs,
                         const std::vector<int>& labels);

// Mean binary cross-entropy of probabilities in [0,1] against a constant
// target of 1 or 0.
ad::Tensor binary_cross_entropy(ad::Tape& tape, const ad::Tensor& probs, double target);

// Source-branch GAN loss: the classifier discriminates real samples (domain
// target 1) from generated ones (0) and classifies both sets; the generator
// side keeps only the generated terms with the domain label flipped.
// In the source branch the arguments are (c_s, x_s, y_s, f_t, y_s); the
// single-direction variants reuse this shape with (c, x_s, y_s, f_s, yhat_t).
ad::Tensor source_gan_loss(ad::Tape& tape, const nn::Classifier& c, const ad::Tensor& x_real,
                           const std::vector<int>& y_real, const ad::Tensor& f_fake,
                           const std::vector<int>& y_fake, Side side);
ad::Tensor source_gan_loss(ad::Tape& tape, const nn::Classifier& c_s, const BatchBundle& bundle,
                           Side side);

// Target-branch GAN loss: c_t treats f_t as source-origin and f_s as
// target-origin; the generator side switches both domain labels.
ad::Tensor target_gan_loss(ad::Tape& tape, const nn::Classifier& c_t, const ad::Tensor& f_t,
                           const std::vector<int>& y_s, const ad::Tensor& f_s,
                           const std::vector<int>& yhat_t, Side side);
ad::Tensor target_gan_loss(ad::Tape& tape, const nn::Classifier& c_t, const BatchBundle& bundle,
                           Side side);

// Euclidean distance between the two sample means.
ad::Tensor global_mmd(ad::Tape& tape, const ad::Tensor& f, const ad::Tensor& x);

struct ClassMmdResult {
    ad::Tensor value;
    int skipped_classes = 0;  // classes missing on at least one side
    bool no_overlap = false;  // no class present on both sides; value is 0
};

// Sum over classes of the distance between per-class means, restricted to
// classes populated on both sides.
ClassMmdResult class_mmd(ad::Tape& tape, const ad::Tensor& f, const std::vector<int>& labels_f,
                         const ad::Tensor& x, const std::vector<int>& labels_x, int classes);

struct MmdResult {
    ad::Tensor value;
    int skipped_classes = 0;
};

// Branch MMD: global + (1/C) * class-wise. The source branch compares
// (f_t, x_t) with labels (y_s, yhat_t); the target branch compares
// (f_s, x_s) with labels (yhat_t, y_s).
MmdResult mmd_loss(ad::Tape& tape, Branch branch, const BatchBundle& bundle);

// Batch mean of the L1 distance between the two classifiers' probability
// rows on f_s.
ad::Tensor consistency_loss(ad::Tape& tape, const nn::Classifier& c_t, const nn::Classifier& c_s,
                            const ad::Tensor& f_s);

struct TotalLoss {
    ad::Tensor value;
    double gan_s = 0.0;
    double gan_t = 0.0;
    double mmd_s = 0.0;
    double mmd_t = 0.0;
    double con = 0.0;
    int skipped_classes = 0;
};

// Full objective. The generator side is the complete linear combination
// gan_s + gan_t + lambda (mmd_s + mmd_t) + gamma con; the classifier side
// omits the MMD terms entirely, so they contribute neither value nor
// gradient to a classifier step.
TotalLoss total_loss(ad::Tape& tape, const nn::Classifier& c_s, const nn::Classifier& c_t,
                     const BatchBundle& bundle, double lambda, double gamma, Side side);

// Mean class cross-entropy of the pretraining classifier on labeled source
// samples.
ad::Tensor pretrain_loss(ad::Tape& tape, const nn::Classifier& c0, const ad::Tensor& x_s,
                         const std::vector<int>& y_s);

}  // namespace bdg::losses

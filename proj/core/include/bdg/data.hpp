#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdg/rng.hpp"
#include "bdg/tensor.hpp"

namespace bdg::data {

enum class DomainTag { source, target };

std::string to_string(DomainTag tag);
DomainTag domain_tag_from(const std::string& s);

// Feature matrix with optional class labels. Source datasets are always
// labeled; target labels, when present, are held out for evaluation and
// never enter a training loss.
struct DomainDataset {
    ad::Tensor features;      // n x d
    std::vector<int> labels;  // empty when unlabeled
    DomainTag domain = DomainTag::source;
    int classes = 0;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    bool labeled() const { return !labels.empty(); }
};

enum class ShiftKind { gaussian_ring, moons };

std::string to_string(ShiftKind k);
ShiftKind shift_kind_from(const std::string& s);

// Recipe for a synthetic domain pair: a base distribution plus the affine
// shift (rotation in the first two feature axes, global scale, translation)
// that produces the target domain.
struct ShiftSpec {
    ShiftKind kind = ShiftKind::gaussian_ring;
    int classes = 5;
    int per_domain = 500;
    int dim = 2;
    double rotation = 0.7853981633974483;  // radians; 45 degrees
    std::vector<double> translation;       // per-axis; empty means zero
    double scale = 1.0;
    double noise_sigma = 0.35;
    std::vector<double> imbalance;  // per-class weights; empty means balanced
    std::uint64_t seed = 7;

    void validate() const;
    bool is_identity_shift() const;
};

// Draws the source domain and an independently-sampled target domain pushed
// through the shift transform. Both keep ground-truth labels; the target's
// are for evaluation only. Deterministic given the ShiftSpec (including its seed).
std::pair<DomainDataset, DomainDataset> make_domain_pair(const ShiftSpec& spec);

// CSV round trip: header "d,C,domain", then one row per sample with d
// feature columns and a final label column (empty when unlabeled). Features
// are written with 17 significant digits, so save/load is lossless.
void save_dataset(const DomainDataset& ds, const std::string& path);
DomainDataset load_dataset(const std::string& path);

enum class SampleStrategy { uniform, class_balanced };

struct Batch {
    ad::Tensor features;
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

// Stateful batch source. `uniform` walks a fresh permutation per epoch, so
// one epoch touches every index exactly once. `class_balanced` draws
// ceil(size/C) rounds across classes (rotating the starting class batch to
// batch), truncated to the requested size; each class keeps its own epoch
// permutation. Labels may be overridden (pseudo labels) without touching the
// dataset's held-out ground truth.
class BatchSampler {
public:
    BatchSampler(const DomainDataset& ds, SampleStrategy strategy, Rng rng,
                 std::optional<std::vector<int>> labels_override = std::nullopt);

    std::vector<std::size_t> next_indices(std::size_t size);
    Batch next(std::size_t size);

    // Swap in fresh labels (pseudo-label refresh) and rebuild class pools.
    void set_labels(std::vector<int> labels);

private:
    void rebuild_pools();

    const DomainDataset* ds_;
    SampleStrategy strategy_;
    Rng rng_;
    std::vector<int> labels_;
    std::vector<std::size_t> perm_;
    std::size_t cursor_ = 0;
    std::vector<std::vector<std::size_t>> pools_;
    std::vector<std::size_t> pool_cursors_;
    std::size_t start_class_ = 0;
};

// Materializes rows by index.
Batch gather_batch(const DomainDataset& ds, const std::vector<std::size_t>& indices,
                   const std::vector<int>* labels_override = nullptr);

}  // namespace bdg::data

#include "bdg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bdg/errors.hpp"

namespace bdg::data {

using ad::Tensor;

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kRingRadius = 4.0;
}  // namespace

std::string to_string(DomainTag tag) { return tag == DomainTag::source ? "source" : "target"; }

DomainTag domain_tag_from(const std::string& s) {
    if (s == "source") return DomainTag::source;
    if (s == "target") return DomainTag::target;
    throw ParseError("unknown domain tag: " + s);
}

std::string to_string(ShiftKind k) { return k == ShiftKind::gaussian_ring ? "gaussian_ring" : "moons"; }

ShiftKind shift_kind_from(const std::string& s) {
    if (s == "gaussian_ring") return ShiftKind::gaussian_ring;
    if (s == "moons") return ShiftKind::moons;
    throw ValidationError("unknown shift kind: " + s);
}

void ShiftSpec::validate() const {
    if (classes < 2) throw ValidationError("shift spec needs at least 2 classes");
    if (dim < 2) throw ValidationError("shift spec needs dim >= 2");
    if (kind == ShiftKind::moons && classes != 2)
        throw ValidationError("moons is a 2-class task");
    if (per_domain < 2 * classes)
        throw ValidationError("shift spec needs at least 2 samples per class per domain");
    if (noise_sigma < 0.0) throw ValidationError("noise sigma must be non-negative");
    if (scale == 0.0) throw ValidationError("scale must be non-zero");
    if (!translation.empty() && translation.size() != static_cast<std::size_t>(dim))
        throw ValidationError("translation size must equal dim");
    if (!imbalance.empty()) {
        if (imbalance.size() != static_cast<std::size_t>(classes))
            throw ValidationError("imbalance needs one weight per class");
        for (double w : imbalance)
            if (w <= 0.0) throw ValidationError("imbalance weights must be positive");
    }
}

bool ShiftSpec::is_identity_shift() const {
    if (rotation != 0.0 || scale != 1.0) return false;
    for (double t : translation)
        if (t != 0.0) return false;
    return true;
}

namespace {

// Largest-remainder split of n samples over class weights.
std::vector<std::size_t> class_counts(const ShiftSpec& spec) {
    const std::size_t c = static_cast<std::size_t>(spec.classes);
    const std::size_t n = static_cast<std::size_t>(spec.per_domain);
    std::vector<double> w(c, 1.0);
    if (!spec.imbalance.empty()) w = spec.imbalance;
    double total = 0.0;
    for (double v : w) total += v;
    std::vector<std::size_t> counts(c);
    std::vector<std::pair<double, std::size_t>> rema(c);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < c; ++i) {
        const double exact = static_cast<double>(n) * w[i] / total;
        counts[i] = static_cast<std::size_t>(exact);
        rema[i] = {exact - static_cast<double>(counts[i]), i};
        assigned += counts[i];
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[rema[k % c].second];
    for (std::size_t i = 0; i < c; ++i)
        if (counts[i] < 2)
            throw ValidationError("class " + std::to_string(i) +
                                  " gets fewer than 2 samples; raise per_domain or rebalance");
    return counts;
}

// Base draw for one sample of class c, before any domain shift.
std::vector<double> base_point(const ShiftSpec& spec, int c, Rng& rng) {
    std::vector<double> p(static_cast<std::size_t>(spec.dim), 0.0);
    if (spec.kind == ShiftKind::gaussian_ring) {
        const double angle = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(spec.classes);
        p[0] = kRingRadius * std::cos(angle);
        p[1] = kRingRadius * std::sin(angle);
    } else {
        const double t = rng.uniform(0.0, kPi);
        if (c == 0) {
            p[0] = kRingRadius * std::cos(t);
            p[1] = kRingRadius * std::sin(t);
        } else {
            p[0] = kRingRadius - kRingRadius * std::cos(t);
            p[1] = kRingRadius * 0.5 - kRingRadius * std::sin(t);
        }
    }
    for (auto& v : p) v += rng.normal(0.0, spec.noise_sigma);
    return p;
}

void apply_shift(const ShiftSpec& spec, std::vector<double>& p) {
    for (auto& v : p) v *= spec.scale;
    const double c = std::cos(spec.rotation), s = std::sin(spec.rotation);
    const double x = p[0], y = p[1];
    p[0] = c * x - s * y;
    p[1] = s * x + c * y;
    if (!spec.translation.empty())
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += spec.translation[i];
}

DomainDataset assemble(const ShiftSpec& spec, DomainTag tag, bool shifted, Rng& rng,
                       const std::vector<std::size_t>& counts) {
    const std::size_t d = static_cast<std::size_t>(spec.dim);
    std::size_t n = 0;
    for (auto c : counts) n += c;
    DomainDataset ds;
    ds.features = Tensor({n, d});
    ds.labels.resize(n);
    ds.domain = tag;
    ds.classes = spec.classes;
    std::size_t row = 0;
    for (int c = 0; c < spec.classes; ++c) {
        for (std::size_t k = 0; k < counts[static_cast<std::size_t>(c)]; ++k, ++row) {
            std::vector<double> p = base_point(spec, c, rng);
            if (shifted) apply_shift(spec, p);
            for (std::size_t j = 0; j < d; ++j) ds.features.at(row, j) = p[j];
            ds.labels[row] = c;
        }
    }
    return ds;
}

}  // namespace

std::pair<DomainDataset, DomainDataset> make_domain_pair(const ShiftSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::vector<std::size_t> counts = class_counts(spec);
    DomainDataset source = assemble(spec, DomainTag::source, false, rng, counts);
    DomainDataset target = assemble(spec, DomainTag::target, true, rng, counts);
    return {std::move(source), std::move(target)};
}

void save_dataset(const DomainDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open dataset for writing: " + path);
    out << ds.dim() << "," << ds.classes << "," << to_string(ds.domain) << "\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features.at(i, j));
            out << buf << ",";
        }
        if (ds.labeled()) out << ds.labels[i];
        out << "\n";
    }
    if (!out) throw IoError("writing dataset failed: " + path);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw ParseError("trailing characters in number '" + s + "'", line_no);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        throw ParseError("malformed number '" + s + "'", line_no);
    }
}

}  // namespace

DomainDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
    auto header = split_csv(line);
    if (header.size() != 3) throw ParseError("header must be d,C,domain", 1);
    std::size_t d = 0;
    int classes = 0;
    try {
        d = static_cast<std::size_t>(std::stoul(header[0]));
        classes = std::stoi(header[1]);
    } catch (const std::exception&) {
        throw ParseError("malformed header counts", 1);
    }
    if (d == 0 || classes <= 0) throw ParseError("header extents must be positive", 1);
    DomainDataset ds;
    ds.domain = domain_tag_from(header[2]);
    ds.classes = classes;

    std::vector<double> values;
    std::vector<int> labels;
    bool any_label = false, any_unlabeled = false;
    std::size_t line_no = 1, rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_csv(line);
        if (fields.size() != d + 1)
            throw ParseError("expected " + std::to_string(d + 1) + " columns, found " +
                                 std::to_string(fields.size()),
                             line_no);
        for (std::size_t j = 0; j < d; ++j) values.push_back(parse_double(fields[j], line_no));
        const std::string& lab = fields[d];
        if (lab.empty()) {
            any_unlabeled = true;
            labels.push_back(-1);
        } else {
            any_label = true;
            int v = 0;
            try {
                v = std::stoi(lab);
            } catch (const std::exception&) {
                throw ParseError("malformed label '" + lab + "'", line_no);
            }
            if (v < 0 || v >= classes)
                throw ParseError("label " + std::to_string(v) + " outside [0, " +
                                     std::to_string(classes) + ")",
                                 line_no);
            labels.push_back(v);
        }
        ++rows;
    }
    if (any_label && any_unlabeled)
        throw ParseError("dataset mixes labeled and unlabeled rows", line_no);
    ds.features = Tensor({rows, d}, std::move(values));
    if (any_label) ds.labels = std::move(labels);
    return ds;
}

// ---------------------------------------------------------------------------
// Sampling

BatchSampler::BatchSampler(const DomainDataset& ds, SampleStrategy strategy, Rng rng,
                           std::optional<std::vector<int>> labels_override)
    : ds_(&ds), strategy_(strategy), rng_(rng) {
    if (labels_override)
        labels_ = std::move(*labels_override);
    else
        labels_ = ds.labels;
    if (strategy_ == SampleStrategy::class_balanced && labels_.empty())
        throw ContractError("class_balanced sampling requires labels");
    if (!labels_.empty() && labels_.size() != ds.size())
        throw DimensionError("sampler label count does not match dataset size");
    rebuild_pools();
}

void BatchSampler::set_labels(std::vector<int> labels) {
    if (labels.size() != ds_->size())
        throw DimensionError("sampler label count does not match dataset size");
    labels_ = std::move(labels);
    rebuild_pools();
}

void BatchSampler::rebuild_pools() {
    perm_.resize(ds_->size());
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
    rng_.shuffle(perm_);
    cursor_ = 0;
    if (strategy_ == SampleStrategy::class_balanced) {
        pools_.assign(static_cast<std::size_t>(ds_->classes), {});
        for (std::size_t i = 0; i < labels_.size(); ++i)
            pools_[static_cast<std::size_t>(labels_[i])].push_back(i);
        pool_cursors_.assign(pools_.size(), 0);
        for (auto& pool : pools_) rng_.shuffle(pool);
    }
}

std::vector<std::size_t> BatchSampler::next_indices(std::size_t size) {
    if (size == 0) throw ContractError("batch size must be at least 1");
    std::vector<std::size_t> out;
    out.reserve(size);
    if (strategy_ == SampleStrategy::uniform) {
        while (out.size() < size) {
            if (cursor_ >= perm_.size()) {
                rng_.shuffle(perm_);
                cursor_ = 0;
            }
            out.push_back(perm_[cursor_++]);
        }
        return out;
    }
    const std::size_t c = pools_.size();
    std::size_t cls = start_class_;
    while (out.size() < size) {
        auto& pool = pools_[cls];
        if (!pool.empty()) {
            auto& cur = pool_cursors_[cls];
            if (cur >= pool.size()) {
                rng_.shuffle(pool);
                cur = 0;
            }
            out.push_back(pool[cur++]);
        }
        cls = (cls + 1) % c;
    }
    start_class_ = (start_class_ + 1) % c;
    return out;
}

Batch BatchSampler::next(std::size_t size) {
    return gather_batch(*ds_, next_indices(size), labels_.empty() ? nullptr : &labels_);
}

Batch gather_batch(const DomainDataset& ds, const std::vector<std::size_t>& indices,
                   const std::vector<int>* labels_override) {
    Batch b;
    const std::size_t d = ds.dim();
    b.features = Tensor({indices.size(), d});
    b.indices = indices;
    const std::vector<int>* labels = labels_override ? labels_override : &ds.labels;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) b.features.at(i, j) = ds.features.at(indices[i], j);
        if (!labels->empty()) b.labels.push_back((*labels)[indices[i]]);
    }
    return b;
}

}  // namespace bdg::data

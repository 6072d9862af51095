#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "infomatch/common.hpp"
#include "infomatch/image.hpp"
#include "infomatch/rng.hpp"

namespace infomatch {

struct LabeledExample {
    Image image;
    std::vector<float> label;  // one-hot, length k

    int label_index() const { return one_hot_index(label); }
};

struct Dataset {
    std::vector<LabeledExample> labeled;
    std::vector<Image> unlabeled;
    int class_count = 0;
};

// ---------------------------------------------------------------------------
// CIFAR-10 style binary records: 1 label byte + C*H*W pixel bytes,
// channel-planar, row-major. Default geometry is the 32x32x3 layout.
// ---------------------------------------------------------------------------

constexpr int kCifarHeight = 32;
constexpr int kCifarWidth = 32;
constexpr int kCifarChannels = 3;
constexpr int kCifarClasses = 10;
constexpr size_t kCifarRecordBytes = 1 + static_cast<size_t>(kCifarHeight) * kCifarWidth * kCifarChannels;

inline Dataset load_cifar10_binary(const std::string& path, int class_count = kCifarClasses) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(cat("load_cifar10_binary: cannot open ", path));

    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    if (file_size % kCifarRecordBytes != 0)
        throw FormatError(cat("load_cifar10_binary: ", path, " length ", file_size,
                              " is not a multiple of the ", kCifarRecordBytes,
                              "-byte record; truncation at byte offset ",
                              (file_size / kCifarRecordBytes) * kCifarRecordBytes));

    const size_t records = file_size / kCifarRecordBytes;
    Dataset ds;
    ds.class_count = class_count;
    ds.labeled.reserve(records);

    std::vector<unsigned char> rec(kCifarRecordBytes);
    for (size_t r = 0; r < records; ++r) {
        in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
        if (!in)
            throw FormatError(cat("load_cifar10_binary: short read at byte offset ", r * kCifarRecordBytes));
        const int label = rec[0];
        if (label >= class_count)
            throw FormatError(cat("load_cifar10_binary: label byte ", label, " >= class count ",
                                  class_count, " at byte offset ", r * kCifarRecordBytes));
        LabeledExample ex;
        ex.label = make_one_hot(class_count, label);
        ex.image = Image(kCifarHeight, kCifarWidth, kCifarChannels);
        for (size_t i = 0; i + 1 < kCifarRecordBytes; ++i)
            ex.image.pix[i] = static_cast<float>(rec[i + 1]) / 255.0f;
        ds.labeled.push_back(std::move(ex));
    }
    return ds;
}

inline void write_cifar10_binary(const std::string& path, const std::vector<LabeledExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(cat("write_cifar10_binary: cannot open ", path));
    for (const auto& ex : examples) {
        require(ex.image.height == kCifarHeight && ex.image.width == kCifarWidth &&
                    ex.image.channels == kCifarChannels,
                "write_cifar10_binary: image is not 32x32x3");
        const unsigned char label = static_cast<unsigned char>(ex.label_index());
        out.put(static_cast<char>(label));
        for (float v : ex.image.pix) {
            const int b = static_cast<int>(std::lround(clamp01(v) * 255.0f));
            out.put(static_cast<char>(static_cast<unsigned char>(b)));
        }
    }
    if (!out) throw IoError(cat("write_cifar10_binary: write failed for ", path));
}

// ---------------------------------------------------------------------------
// Synthetic blob dataset: each class is a fixed smooth template plus pixel
// noise, so a nearest-template classifier is near-perfect at low noise and
// the difficulty is controlled entirely by the noise level.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    int class_count = 4;
    int per_class = 100;
    int height = 16;
    int width = 16;
    int channels = 1;
    double noise = 0.5;
    std::uint64_t seed = 7;        // fixes the class templates
    std::uint64_t noise_seed = 0;  // 0: reuse seed; set differently for held-out draws
};

namespace detail {

// Low-frequency template: coarse random grid, bilinearly upsampled.
inline Image synthetic_template(const SyntheticSpec& spec, int cls) {
    constexpr int kGrid = 4;
    Rng rng(mix_seed(spec.seed, 0x7e3a11, static_cast<std::uint64_t>(cls)));
    Image tpl(spec.height, spec.width, spec.channels);
    for (int c = 0; c < spec.channels; ++c) {
        float grid[kGrid][kGrid];
        for (auto& row : grid)
            for (float& g : row) g = static_cast<float>(rng.uniform(0.1, 0.9));
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const float gy = static_cast<float>(y) / spec.height * (kGrid - 1);
                const float gx = static_cast<float>(x) / spec.width * (kGrid - 1);
                const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
                const int y1 = std::min(y0 + 1, kGrid - 1), x1 = std::min(x0 + 1, kGrid - 1);
                const float fy = gy - y0, fx = gx - x0;
                tpl.at(c, y, x) = (1 - fy) * ((1 - fx) * grid[y0][x0] + fx * grid[y0][x1]) +
                                  fy * ((1 - fx) * grid[y1][x0] + fx * grid[y1][x1]);
            }
        }
    }
    return tpl;
}

}  // namespace detail

inline Dataset generate_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.class_count < 2) throw ConfigError("generate_synthetic_dataset: class_count must be >= 2");
    if (spec.per_class < 1) throw ConfigError("generate_synthetic_dataset: per_class must be >= 1");
    if (spec.height < 1 || spec.width < 1 || spec.channels < 1)
        throw ConfigError("generate_synthetic_dataset: bad image geometry");

    Dataset ds;
    ds.class_count = spec.class_count;
    ds.labeled.reserve(static_cast<size_t>(spec.class_count) * spec.per_class);
    const std::uint64_t noise_seed = spec.noise_seed ? spec.noise_seed : spec.seed;
    for (int cls = 0; cls < spec.class_count; ++cls) {
        const Image tpl = detail::synthetic_template(spec, cls);
        for (int i = 0; i < spec.per_class; ++i) {
            Rng rng(mix_seed(noise_seed, 0x51ab2c, static_cast<std::uint64_t>(cls),
                             static_cast<std::uint64_t>(i)));
            LabeledExample ex;
            ex.label = make_one_hot(spec.class_count, cls);
            ex.image = tpl;
            if (spec.noise > 0.0)
                for (float& v : ex.image.pix)
                    v = clamp01(v + static_cast<float>(spec.noise * rng.normal()));
            ds.labeled.push_back(std::move(ex));
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Labeled/unlabeled split. The unlabeled pool contains every image of the
// dataset (including those picked as labeled); true labels ride along as
// hidden diagnostics and are never visible to training.
// ---------------------------------------------------------------------------

struct LabeledSet {
    std::vector<LabeledExample> examples;
    int class_count = 0;
};

struct UnlabeledSet {
    std::vector<Image> images;
    std::vector<int> hidden_labels;  // -1 if genuinely unknown
    int class_count = 0;
};

struct Split {
    LabeledSet labeled;
    UnlabeledSet unlabeled;
    std::vector<int> labeled_indices;  // indices into the source dataset
};

inline Split split_labeled(const Dataset& ds, int labels_per_class, std::uint64_t seed) {
    if (labels_per_class < 1) throw ConfigError("split_labeled: labels_per_class must be >= 1");

    std::vector<std::vector<int>> by_class(ds.class_count);
    for (size_t i = 0; i < ds.labeled.size(); ++i)
        by_class[ds.labeled[i].label_index()].push_back(static_cast<int>(i));

    Split split;
    split.labeled.class_count = ds.class_count;
    split.unlabeled.class_count = ds.class_count;
    for (int cls = 0; cls < ds.class_count; ++cls) {
        auto& pool = by_class[cls];
        if (static_cast<int>(pool.size()) < labels_per_class)
            throw ConfigError(cat("split_labeled: class ", cls, " has ", pool.size(),
                                  " examples, need ", labels_per_class));
        Rng rng(mix_seed(seed, 0xba1a9ce, static_cast<std::uint64_t>(cls)));
        const std::vector<int> order = rng.permutation(static_cast<int>(pool.size()));
        for (int i = 0; i < labels_per_class; ++i) split.labeled_indices.push_back(pool[order[i]]);
    }
    std::sort(split.labeled_indices.begin(), split.labeled_indices.end());
    for (int idx : split.labeled_indices) split.labeled.examples.push_back(ds.labeled[idx]);

    split.unlabeled.images.reserve(ds.labeled.size() + ds.unlabeled.size());
    for (const auto& ex : ds.labeled) {
        split.unlabeled.images.push_back(ex.image);
        split.unlabeled.hidden_labels.push_back(ex.label_index());
    }
    for (const auto& im : ds.unlabeled) {
        split.unlabeled.images.push_back(im);
        split.unlabeled.hidden_labels.push_back(-1);
    }
    return split;
}

// ---------------------------------------------------------------------------
// Deterministic infinite batch streams, addressable by step so that resuming
// from a checkpoint replays the exact sequence.
// ---------------------------------------------------------------------------

class BatchStream {
public:
    enum class Mode {
        kEmitShort,  // epoch = ceil(n/b) batches, final one may be short
        kFullWrap    // batches always full, shuffles wrap across epochs
    };

    BatchStream(int set_size, int batch_size, std::uint64_t seed, Mode mode)
        : n_(set_size), batch_(batch_size), seed_(seed), mode_(mode) {
        if (n_ <= 0) throw ConfigError("BatchStream: empty set");
        if (batch_ < 1) throw ConfigError("BatchStream: batch_size must be >= 1");
    }

    std::vector<int> batch(std::int64_t step) const {
        std::vector<int> out;
        if (mode_ == Mode::kEmitShort) {
            const std::int64_t per_epoch = (n_ + batch_ - 1) / batch_;
            const std::int64_t epoch = step / per_epoch;
            const int bi = static_cast<int>(step % per_epoch);
            const auto& perm = epoch_perm(epoch);
            const int start = bi * batch_;
            const int end = std::min(n_, start + batch_);
            out.assign(perm.begin() + start, perm.begin() + end);
        } else {
            out.reserve(batch_);
            std::int64_t g = step * batch_;
            for (int j = 0; j < batch_; ++j, ++g) {
                const std::int64_t epoch = g / n_;
                const auto& perm = epoch_perm(epoch);
                out.push_back(perm[static_cast<size_t>(g % n_)]);
            }
        }
        return out;
    }

private:
    const std::vector<int>& epoch_perm(std::int64_t epoch) const {
        if (epoch != cached_epoch_) {
            Rng rng(mix_seed(seed_, 0x5fu, static_cast<std::uint64_t>(epoch)));
            cached_perm_ = rng.permutation(n_);
            cached_epoch_ = epoch;
        }
        return cached_perm_;
    }

    int n_;
    int batch_;
    std::uint64_t seed_;
    Mode mode_;
    mutable std::int64_t cached_epoch_ = -1;
    mutable std::vector<int> cached_perm_;
};

}  // namespace infomatch

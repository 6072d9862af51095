#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "infomatch/common.hpp"
#include "infomatch/image.hpp"
#include "infomatch/rng.hpp"

namespace infomatch {

// ---------------------------------------------------------------------------
// Weak view: horizontal flip with probability 1/2; optional pad-and-crop
// translation (off by default).
// ---------------------------------------------------------------------------

struct WeakAugmentConfig {
    bool pad_crop = false;
    int pad = 4;
};

namespace detail {

inline int reflect_index(int i, int n) {
    // reflect without repeating the border pixel
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace detail

inline Image weak_augment(const Image& im, const WeakAugmentConfig& cfg, Rng& rng) {
    Image out = rng.coin() ? hflip(im) : im;
    if (cfg.pad_crop && cfg.pad > 0) {
        const int dy = rng.uniform_int(2 * cfg.pad + 1) - cfg.pad;
        const int dx = rng.uniform_int(2 * cfg.pad + 1) - cfg.pad;
        Image shifted(out.height, out.width, out.channels);
        for (int c = 0; c < out.channels; ++c)
            for (int y = 0; y < out.height; ++y)
                for (int x = 0; x < out.width; ++x)
                    shifted.at(c, y, x) = out.at(c, detail::reflect_index(y + dy, out.height),
                                                 detail::reflect_index(x + dx, out.width));
        out = std::move(shifted);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Strong view: RandAugment-style policy. Each transform maps [0,1] images to
// [0,1] images of identical shape; magnitudes live on a 1..10 integer scale.
// ---------------------------------------------------------------------------

enum class TransformKind {
    kIdentity,
    kAutoContrast,
    kEqualize,
    kRotate,
    kSolarize,
    kColor,
    kPosterize,
    kContrast,
    kBrightness,
    kSharpness,
    kShearX,
    kShearY,
    kTranslateX,
    kTranslateY,
};

inline std::vector<TransformKind> default_transform_catalog() {
    return {TransformKind::kIdentity,   TransformKind::kAutoContrast, TransformKind::kEqualize,
            TransformKind::kRotate,     TransformKind::kSolarize,     TransformKind::kColor,
            TransformKind::kPosterize,  TransformKind::kContrast,     TransformKind::kBrightness,
            TransformKind::kSharpness,  TransformKind::kShearX,       TransformKind::kShearY,
            TransformKind::kTranslateX, TransformKind::kTranslateY};
}

struct StrongPolicy {
    std::vector<TransformKind> catalog = default_transform_catalog();
    int ops_per_image = 2;
    int magnitude_min = 1;
    int magnitude_max = 10;
    double cutout_fraction = 0.5;  // of the shorter side
};

namespace detail {

inline float bilinear_sample(const Image& im, int c, double sy, double sx, float fill) {
    const int y0 = static_cast<int>(std::floor(sy));
    const int x0 = static_cast<int>(std::floor(sx));
    const double fy = sy - y0, fx = sx - x0;
    auto px = [&](int y, int x) -> float {
        if (y < 0 || y >= im.height || x < 0 || x >= im.width) return fill;
        return im.at(c, y, x);
    };
    const double top = (1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1);
    const double bot = (1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1);
    return static_cast<float>((1 - fy) * top + fy * bot);
}

// dst(y, x) samples src at the inverse affine map around the image center.
inline Image affine(const Image& im, double a11, double a12, double a21, double a22, double ty,
                    double tx) {
    Image out(im.height, im.width, im.channels);
    const double cy = (im.height - 1) / 2.0;
    const double cx = (im.width - 1) / 2.0;
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) {
            const double ry = y - cy - ty;
            const double rx = x - cx - tx;
            const double sy = a11 * ry + a12 * rx + cy;
            const double sx = a21 * ry + a22 * rx + cx;
            for (int c = 0; c < im.channels; ++c)
                out.at(c, y, x) = clamp01(bilinear_sample(im, c, sy, sx, 0.5f));
        }
    return out;
}

inline int to_byte(float v) { return static_cast<int>(std::lround(clamp01(v) * 255.0f)); }

inline Image autocontrast(const Image& im) {
    Image out = im;
    const size_t plane = static_cast<size_t>(im.height) * im.width;
    for (int c = 0; c < im.channels; ++c) {
        int lo = 255, hi = 0;
        for (size_t i = 0; i < plane; ++i) {
            const int b = to_byte(im.pix[c * plane + i]);
            lo = std::min(lo, b);
            hi = std::max(hi, b);
        }
        if (hi <= lo) continue;
        const double scale = 255.0 / (hi - lo);
        for (size_t i = 0; i < plane; ++i) {
            const int b = to_byte(im.pix[c * plane + i]);
            out.pix[c * plane + i] = clamp01(static_cast<float>(std::lround((b - lo) * scale) / 255.0));
        }
    }
    return out;
}

inline Image equalize(const Image& im) {
    Image out = im;
    const size_t plane = static_cast<size_t>(im.height) * im.width;
    for (int c = 0; c < im.channels; ++c) {
        std::array<int, 256> hist{};
        for (size_t i = 0; i < plane; ++i) hist[to_byte(im.pix[c * plane + i])]++;
        int total = 0, last_nonzero = 0;
        for (int b = 0; b < 256; ++b)
            if (hist[b]) {
                total += hist[b];
                last_nonzero = hist[b];
            }
        const int step = (total - last_nonzero) / 255;
        if (step == 0) continue;
        std::array<int, 256> lut{};
        int n = step / 2;
        for (int b = 0; b < 256; ++b) {
            lut[b] = std::min(255, n / step);
            n += hist[b];
        }
        for (size_t i = 0; i < plane; ++i)
            out.pix[c * plane + i] = static_cast<float>(lut[to_byte(im.pix[c * plane + i])]) / 255.0f;
    }
    return out;
}

inline void gray_plane(const Image& im, std::vector<float>& gray) {
    gray.assign(static_cast<size_t>(im.height) * im.width, 0.0f);
    const size_t plane = gray.size();
    if (im.channels == 3) {
        for (size_t i = 0; i < plane; ++i)
            gray[i] = 0.299f * im.pix[i] + 0.587f * im.pix[plane + i] + 0.114f * im.pix[2 * plane + i];
    } else {
        for (size_t i = 0; i < plane; ++i) {
            float s = 0.0f;
            for (int c = 0; c < im.channels; ++c) s += im.pix[c * plane + i];
            gray[i] = s / im.channels;
        }
    }
}

inline Image blend_toward(const Image& im, const Image& base, double factor) {
    // out = base + factor * (im - base)
    Image out = im;
    for (size_t i = 0; i < im.pix.size(); ++i)
        out.pix[i] = clamp01(static_cast<float>(base.pix[i] + factor * (im.pix[i] - base.pix[i])));
    return out;
}

inline Image smooth3x3(const Image& im) {
    // 3x3 kernel 1/13 * [[1,1,1],[1,5,1],[1,1,1]], borders untouched
    Image out = im;
    for (int c = 0; c < im.channels; ++c)
        for (int y = 1; y + 1 < im.height; ++y)
            for (int x = 1; x + 1 < im.width; ++x) {
                double s = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        s += im.at(c, y + dy, x + dx) * ((dy == 0 && dx == 0) ? 5.0 : 1.0);
                out.at(c, y, x) = clamp01(static_cast<float>(s / 13.0));
            }
    return out;
}

}  // namespace detail

// Applies one catalog transform at integer magnitude in [1, 10]; sign and
// auxiliary draws come from rng in a fixed order.
inline Image apply_transform(const Image& im, TransformKind kind, int magnitude, Rng& rng) {
    const double frac = magnitude / 10.0;
    const double sign = rng.coin() ? 1.0 : -1.0;
    switch (kind) {
        case TransformKind::kIdentity:
            return im;
        case TransformKind::kAutoContrast:
            return detail::autocontrast(im);
        case TransformKind::kEqualize:
            return detail::equalize(im);
        case TransformKind::kRotate: {
            const double th = sign * frac * (30.0 * std::numbers::pi / 180.0);
            // inverse rotation
            return detail::affine(im, std::cos(th), -std::sin(th), std::sin(th), std::cos(th), 0, 0);
        }
        case TransformKind::kSolarize: {
            const float t = static_cast<float>(1.0 - frac);
            Image out = im;
            for (float& v : out.pix)
                if (v >= t) v = 1.0f - v;
            return out;
        }
        case TransformKind::kColor: {
            std::vector<float> gray;
            detail::gray_plane(im, gray);
            Image base(im.height, im.width, im.channels);
            const size_t plane = gray.size();
            for (int c = 0; c < im.channels; ++c)
                for (size_t i = 0; i < plane; ++i) base.pix[c * plane + i] = gray[i];
            return detail::blend_toward(im, base, 1.0 + sign * 0.9 * frac);
        }
        case TransformKind::kPosterize: {
            const int bits = 8 - static_cast<int>(std::lround(4.0 * frac));
            const int keep = ~((1 << (8 - bits)) - 1) & 0xff;
            Image out = im;
            for (float& v : out.pix) v = static_cast<float>(detail::to_byte(v) & keep) / 255.0f;
            return out;
        }
        case TransformKind::kContrast: {
            std::vector<float> gray;
            detail::gray_plane(im, gray);
            double mean = 0.0;
            for (float g : gray) mean += g;
            mean /= static_cast<double>(gray.size());
            Image base(im.height, im.width, im.channels, static_cast<float>(mean));
            return detail::blend_toward(im, base, 1.0 + sign * 0.9 * frac);
        }
        case TransformKind::kBrightness: {
            Image black(im.height, im.width, im.channels, 0.0f);
            return detail::blend_toward(im, black, 1.0 + sign * 0.9 * frac);
        }
        case TransformKind::kSharpness:
            return detail::blend_toward(im, detail::smooth3x3(im), 1.0 + sign * 0.9 * frac);
        case TransformKind::kShearX: {
            const double s = sign * 0.3 * frac;
            return detail::affine(im, 1.0, 0.0, -s, 1.0, 0, 0);
        }
        case TransformKind::kShearY: {
            const double s = sign * 0.3 * frac;
            return detail::affine(im, 1.0, -s, 0.0, 1.0, 0, 0);
        }
        case TransformKind::kTranslateX:
            return detail::affine(im, 1.0, 0.0, 0.0, 1.0, 0, sign * 0.3 * frac * im.width);
        case TransformKind::kTranslateY:
            return detail::affine(im, 1.0, 0.0, 0.0, 1.0, sign * 0.3 * frac * im.height, 0);
    }
    throw ContractError("apply_transform: unknown transform");
}

inline Image cutout(const Image& im, double fraction, Rng& rng) {
    const int side = static_cast<int>(std::lround(fraction * std::min(im.height, im.width)));
    if (side <= 0) return im;
    const int cy = rng.uniform_int(im.height);
    const int cx = rng.uniform_int(im.width);
    Image out = im;
    const int y0 = std::max(0, cy - side / 2), y1 = std::min(im.height, cy - side / 2 + side);
    const int x0 = std::max(0, cx - side / 2), x1 = std::min(im.width, cx - side / 2 + side);
    for (int c = 0; c < im.channels; ++c)
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) out.at(c, y, x) = 0.5f;
    return out;
}

// ops_per_image uniformly sampled catalog transforms, then cutout. An empty
// catalog means the identity policy (no cutout either).
inline Image strong_augment(const Image& im, const StrongPolicy& policy, Rng& rng) {
    if (policy.catalog.empty()) return im;
    Image out = im;
    for (int o = 0; o < policy.ops_per_image; ++o) {
        const TransformKind kind = policy.catalog[rng.uniform_int(static_cast<int>(policy.catalog.size()))];
        const int magnitude = rng.uniform_int(policy.magnitude_min, policy.magnitude_max);
        out = apply_transform(out, kind, magnitude, rng);
    }
    return cutout(out, policy.cutout_fraction, rng);
}

// ---------------------------------------------------------------------------
// CutMix: rectangle mask over the weak views of a shuffled batch.
// ---------------------------------------------------------------------------

struct CutmixMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> keep;  // 1 = pixel of image i, 0 = pixel of the partner
    double eta = 1.0;                // exact mean of keep

    std::uint8_t at(int y, int x) const { return keep[static_cast<size_t>(y) * width + x]; }
};

// Keep-ratio lambda ~ Beta(alpha, alpha); one rectangle of target area
// (1 - lambda) * H * W centered uniformly and clipped, mask zero inside.
// eta is recomputed from the realized mask so clipping is accounted for.
inline CutmixMask sample_cutmix_mask(int height, int width, double alpha, Rng& rng) {
    require(height >= 1 && width >= 1, "sample_cutmix_mask: bad shape");
    require(alpha > 0.0, "sample_cutmix_mask: alpha must be positive");
    const double lambda = rng.beta(alpha, alpha);
    const double cut_ratio = std::sqrt(1.0 - lambda);
    const int cut_h = static_cast<int>(std::lround(height * cut_ratio));
    const int cut_w = static_cast<int>(std::lround(width * cut_ratio));
    const int cy = rng.uniform_int(height);
    const int cx = rng.uniform_int(width);

    CutmixMask m;
    m.height = height;
    m.width = width;
    m.keep.assign(static_cast<size_t>(height) * width, 1);
    const int y0 = std::max(0, cy - cut_h / 2), y1 = std::min(height, cy - cut_h / 2 + cut_h);
    const int x0 = std::max(0, cx - cut_w / 2), x1 = std::min(width, cx - cut_w / 2 + cut_w);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.keep[static_cast<size_t>(y) * width + x] = 0;

    std::int64_t ones = 0;
    for (auto v : m.keep) ones += v;
    m.eta = static_cast<double>(ones) / static_cast<double>(m.keep.size());
    return m;
}

// Per pixel: keep=1 takes image i, keep=0 takes image perm[i]; the mask
// broadcasts across channels.
inline std::vector<Image> apply_cutmix(std::span<const Image> weak_batch,
                                       std::span<const int> permutation,
                                       std::span<const CutmixMask> masks) {
    const size_t n = weak_batch.size();
    require(permutation.size() == n && masks.size() == n, "apply_cutmix: size mismatch");
    {
        std::vector<std::uint8_t> seen(n, 0);
        for (int p : permutation) {
            require(p >= 0 && static_cast<size_t>(p) < n && !seen[p], "apply_cutmix: not a permutation");
            seen[p] = 1;
        }
    }
    std::vector<Image> out(n);
    for (size_t i = 0; i < n; ++i) {
        const Image& a = weak_batch[i];
        const Image& b = weak_batch[permutation[i]];
        require(a.same_shape(b), "apply_cutmix: partner shape mismatch");
        require(masks[i].height == a.height && masks[i].width == a.width,
                "apply_cutmix: mask shape mismatch");
        out[i] = a;
        for (int c = 0; c < a.channels; ++c)
            for (int y = 0; y < a.height; ++y)
                for (int x = 0; x < a.width; ++x)
                    if (!masks[i].at(y, x)) out[i].at(c, y, x) = b.at(c, y, x);
    }
    return out;
}

// Mixed pseudo-label: eta * m_i * phat_i + (1 - eta) * m_r * phat_r. Mass is
// lost when a source is masked out; the CutMix loss weights rows by what
// remains.
inline std::vector<double> mix_pseudolabels(std::span<const double> phat_i,
                                            std::span<const double> phat_r, bool gate_i,
                                            bool gate_r, double eta) {
    require(phat_i.size() == phat_r.size(), "mix_pseudolabels: length mismatch");
    require(eta >= 0.0 && eta <= 1.0, "mix_pseudolabels: eta out of range");
    std::vector<double> mixed(phat_i.size(), 0.0);
    for (size_t j = 0; j < mixed.size(); ++j)
        mixed[j] = eta * (gate_i ? phat_i[j] : 0.0) + (1.0 - eta) * (gate_r ? phat_r[j] : 0.0);
    return mixed;
}

// ---------------------------------------------------------------------------
// View bundles: the four views per unlabeled image plus CutMix bookkeeping.
// Every image owns independent rng streams derived from (seed, step, index),
// so bundles may be computed in parallel without changing the result.
// ---------------------------------------------------------------------------

struct ViewBundle {
    Image weak;     // x'
    Image strong1;  // x^(1)
    Image strong2;  // x^(2)
    Image cutmix;   // x^c
    CutmixMask mask;
    double eta = 1.0;
    int partner_index = 0;
};

struct AugmentConfig {
    WeakAugmentConfig weak;
    StrongPolicy strong;
    double cutmix_alpha = 1.0;
};

inline std::vector<ViewBundle> make_view_bundles(std::span<const Image> images,
                                                 const AugmentConfig& cfg, std::uint64_t seed,
                                                 std::uint64_t step) {
    const size_t n = images.size();
    std::vector<ViewBundle> bundles(n);
    for (size_t i = 0; i < n; ++i) {
        Rng rw(mix_seed(seed, step, 0xa1, i));
        Rng rs1(mix_seed(seed, step, 0xa2, i));
        Rng rs2(mix_seed(seed, step, 0xa3, i));
        Rng rm(mix_seed(seed, step, 0xa4, i));
        bundles[i].weak = weak_augment(images[i], cfg.weak, rw);
        bundles[i].strong1 = strong_augment(bundles[i].weak, cfg.strong, rs1);
        bundles[i].strong2 = strong_augment(bundles[i].weak, cfg.strong, rs2);
        bundles[i].mask = sample_cutmix_mask(images[i].height, images[i].width, cfg.cutmix_alpha, rm);
        bundles[i].eta = bundles[i].mask.eta;
    }
    Rng rp(mix_seed(seed, step, 0xa5));
    const std::vector<int> perm = rp.permutation(static_cast<int>(n));
    std::vector<Image> weak_batch(n);
    std::vector<CutmixMask> masks(n);
    for (size_t i = 0; i < n; ++i) {
        weak_batch[i] = bundles[i].weak;
        masks[i] = bundles[i].mask;
    }
    std::vector<Image> mixed = apply_cutmix(weak_batch, perm, masks);
    for (size_t i = 0; i < n; ++i) {
        bundles[i].cutmix = std::move(mixed[i]);
        bundles[i].partner_index = perm[i];
    }
    return bundles;
}

}  // namespace infomatch

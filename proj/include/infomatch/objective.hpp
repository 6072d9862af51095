#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "infomatch/common.hpp"
#include "infomatch/matrix.hpp"
#include "infomatch/threshold.hpp"

namespace infomatch {

// Probabilities below this floor enter the cross entropies as the constant
// log(kProbFloor); such entries carry no gradient.
constexpr double kProbFloor = 1e-12;
inline const double kLogFloor = std::log(kProbFloor);

namespace detail {

// Soft-target cross entropy averaged over `denom` rows, with an optional
// per-row gate and weight. Accumulates -sum_j t_ij ln y_ij per row, from
// logits in log-sum-exp form. dz may alias an accumulator (contributions are
// added, not assigned).
inline double gated_soft_ce(const Mat& z, const Mat& targets, const std::vector<std::uint8_t>* gate,
                            double row_weight, double denom, Mat* dz) {
    require(z.same_shape(targets), "cross entropy: logits/target shape mismatch");
    if (dz) require(dz->same_shape(z), "cross entropy: gradient shape mismatch");
    const Mat lp = log_softmax_rows(z);
    double loss = 0.0;
    for (int i = 0; i < z.rows; ++i) {
        if (gate && !(*gate)[i]) continue;
        const double w = row_weight / denom;
        for (int j = 0; j < z.cols; ++j) {
            const double t = targets(i, j);
            if (t == 0.0) continue;
            if (lp(i, j) < kLogFloor) {
                loss += -t * kLogFloor * w;
                continue;  // clamped entry, constant w.r.t. z
            }
            loss += -t * lp(i, j) * w;
            if (dz) {
                for (int l = 0; l < z.cols; ++l)
                    (*dz)(i, l) += w * t * (std::exp(lp(i, l)) - (l == j ? 1.0 : 0.0));
            }
        }
    }
    return loss;
}

}  // namespace detail

// Cross entropy against one-hot ground truth, averaged over the labeled batch.
inline double supervised_loss(const Mat& z_labeled, const Mat& targets, Mat* dz = nullptr) {
    if (z_labeled.rows == 0) return 0.0;
    return detail::gated_soft_ce(z_labeled, targets, nullptr, 1.0, z_labeled.rows, dz);
}

// Masked weak-to-strong pseudo supervision, averaged over the two strong
// views and over the full unlabeled batch (masked rows contribute zero).
inline double pseudo_supervised_loss(const Mat& z1, const Mat& z2, const Mat& phat,
                                     const RowMask& mask, Mat* dz1 = nullptr, Mat* dz2 = nullptr) {
    require(z1.same_shape(z2) && z1.same_shape(phat), "pseudo_supervised_loss: shape mismatch");
    require(mask.rows() == z1.rows, "pseudo_supervised_loss: mask row mismatch");
    if (z1.rows == 0) return 0.0;
    const double denom = z1.rows;
    double loss = detail::gated_soft_ce(z1, phat, &mask.on, 0.5, denom, dz1);
    loss += detail::gated_soft_ce(z2, phat, &mask.on, 0.5, denom, dz2);
    return loss;
}

// Soft-target cross entropy for CutMix rows. Target rows may sum to less
// than one when a source was masked out; the lost mass downweights the row.
inline double cutmix_loss(const Mat& z_cutmix, const Mat& mixed_targets, Mat* dz = nullptr) {
    if (z_cutmix.rows == 0) return 0.0;
    return detail::gated_soft_ce(z_cutmix, mixed_targets, nullptr, 1.0, z_cutmix.rows, dz);
}

// exp(-||z1 - z2||^2): 1 at zero distance, decays monotonically to 0.
inline double gaussian_similarity(std::span<const double> z1, std::span<const double> z2) {
    require(z1.size() == z2.size(), "gaussian_similarity: length mismatch");
    double d2 = 0.0;
    for (size_t j = 0; j < z1.size(); ++j) {
        const double d = z1[j] - z2[j];
        d2 += d * d;
    }
    return std::exp(-d2);
}

// Positive-pair view agreement: mean squared Euclidean distance between the
// two strong views' feature rows. Exactly -mean_i ln gaussian_similarity.
inline double contrastive_lower_loss(const Mat& f1, const Mat& f2, Mat* df1 = nullptr,
                                     Mat* df2 = nullptr) {
    require(f1.same_shape(f2), "contrastive_lower_loss: shape mismatch");
    if (f1.rows == 0) return 0.0;
    const double inv_n = 1.0 / f1.rows;
    double loss = 0.0;
    for (int i = 0; i < f1.rows; ++i) {
        for (int j = 0; j < f1.cols; ++j) {
            const double d = f1(i, j) - f2(i, j);
            loss += d * d * inv_n;
            if (df1) (*df1)(i, j) += 2.0 * d * inv_n;
            if (df2) (*df2)(i, j) -= 2.0 * d * inv_n;
        }
    }
    return loss;
}

struct LossBreakdown {
    double l_sup = 0.0;
    double l_pseudo = 0.0;
    double l_cutmix = 0.0;
    double l_lower = 0.0;
    double lambda = 0.0;
    double l_upper = 0.0;  // l_sup + l_pseudo + l_cutmix
    double total = 0.0;    // l_upper + lambda * l_lower

    bool finite() const {
        return std::isfinite(l_sup) && std::isfinite(l_pseudo) && std::isfinite(l_cutmix) &&
               std::isfinite(l_lower) && std::isfinite(total);
    }
};

inline LossBreakdown total_loss(double l_sup, double l_pseudo, double l_cutmix, double l_lower,
                                double lambda) {
    require(lambda >= 0.0, "total_loss: lambda must be nonnegative");
    LossBreakdown b;
    b.l_sup = l_sup;
    b.l_pseudo = l_pseudo;
    b.l_cutmix = l_cutmix;
    b.l_lower = l_lower;
    b.lambda = lambda;
    b.l_upper = l_sup + l_pseudo + l_cutmix;
    b.total = b.l_upper + lambda * l_lower;
    return b;
}

}  // namespace infomatch

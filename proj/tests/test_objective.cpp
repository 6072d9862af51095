#include <gtest/gtest.h>

#include <cmath>

#include "infomatch/objective.hpp"
#include "test_support.hpp"

using namespace infomatch;
using infomatch::test::expect_grad_matches_fd;
using infomatch::test::one_hot_rows;
using infomatch::test::random_mat;

namespace {

Mat logits_of_probs(std::initializer_list<double> probs) {
    Mat z(1, static_cast<int>(probs.size()));
    int j = 0;
    for (double p : probs) z(0, j++) = std::log(p);
    return z;
}

}  // namespace

// --- softmax ---------------------------------------------------------------

TEST(Softmax, UniformLogits) {
    const Mat y = softmax_rows(Mat::from_rows({{0.0, 0.0, 0.0}}));
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(y(0, j), 1.0 / 3, 1e-15);
}

TEST(Softmax, DocumentedTwoThirds) {
    const Mat y = softmax_rows(Mat::from_rows({{std::log(2.0), 0.0}}));
    EXPECT_NEAR(y(0, 0), 2.0 / 3, 1e-12);
    EXPECT_NEAR(y(0, 1), 1.0 / 3, 1e-12);
}

TEST(Softmax, ShiftInvariance) {
    const Mat z = Mat::from_rows({{0.5, -1.25, 2.0}});
    Mat shifted = z;
    for (double& v : shifted.a) v += 3.5;
    const Mat a = softmax_rows(z), b = softmax_rows(shifted);
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(a(0, j), b(0, j));
}

TEST(Softmax, RowsSumToOneAtExtremeMagnitude) {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const Mat z = random_mat(rng, 3, 4, -1e4, 1e4);
        const Mat y = softmax_rows(z);
        for (int i = 0; i < y.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < y.cols; ++j) {
                EXPECT_GE(y(i, j), 0.0);
                s += y(i, j);
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
}

TEST(Softmax, JacobianMatchesFiniteDifferences) {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        const Mat z = random_mat(rng, 1, 3);
        for (int out = 0; out < 3; ++out) {
            Mat analytic(1, 3);
            const Mat y = softmax_rows(z);
            for (int j = 0; j < 3; ++j)
                analytic(0, j) = y(0, out) * ((j == out ? 1.0 : 0.0) - y(0, j));
            expect_grad_matches_fd(
                [out](const Mat& zz) { return softmax_rows(zz)(0, out); }, z, analytic, 1e-5,
                1e-4, "softmax jacobian");
        }
    }
}

// --- supervised loss --------------------------------------------------------

TEST(SupervisedLoss, NearOneHotPredictionIsNearZero) {
    const Mat z = Mat::from_rows({{40.0, 0.0}});
    const Mat p = Mat::from_rows({{1.0, 0.0}});
    EXPECT_NEAR(supervised_loss(z, p), 0.0, 1e-12);
}

TEST(SupervisedLoss, UniformPredictorGivesLogK) {
    const Mat z(1, 4, 0.0);
    const Mat p = Mat::from_rows({{0.0, 1.0, 0.0, 0.0}});
    EXPECT_NEAR(supervised_loss(z, p), std::log(4.0), 1e-12);
    EXPECT_NEAR(supervised_loss(z, p), 1.386294, 1e-6);
}

TEST(SupervisedLoss, DocumentedPointEight) {
    const Mat z = logits_of_probs({0.8, 0.2});
    const Mat p = Mat::from_rows({{1.0, 0.0}});
    EXPECT_NEAR(supervised_loss(z, p), -std::log(0.8), 1e-12);
    EXPECT_NEAR(supervised_loss(z, p), 0.223144, 1e-6);
}

TEST(SupervisedLoss, BatchMeanSemantics) {
    const Mat z = Mat::from_rows({{std::log(0.8), std::log(0.2)}, {std::log(0.5), std::log(0.5)}});
    const Mat p = Mat::from_rows({{1.0, 0.0}, {1.0, 0.0}});
    EXPECT_NEAR(supervised_loss(z, p), 0.5 * (-std::log(0.8) - std::log(0.5)), 1e-12);
}

// --- pseudo-supervised loss -------------------------------------------------

TEST(PseudoLoss, DocumentedTwoViewValue) {
    const Mat z1 = logits_of_probs({0.8, 0.2});
    const Mat z2 = logits_of_probs({0.5, 0.5});
    const Mat phat = Mat::from_rows({{1.0, 0.0}});
    RowMask mask;
    mask.on = {1};
    const double got = pseudo_supervised_loss(z1, z2, phat, mask);
    EXPECT_NEAR(got, -0.5 * (std::log(0.8) + std::log(0.5)), 1e-12);
    EXPECT_NEAR(got, 0.458145, 1e-6);
}

TEST(PseudoLoss, FullyMaskedIsZero) {
    Rng rng(3);
    const Mat z1 = random_mat(rng, 4, 3), z2 = random_mat(rng, 4, 3);
    const Mat phat = one_hot_rows(rng, 4, 3);
    RowMask mask;
    mask.on = {0, 0, 0, 0};
    Mat dz1(4, 3), dz2(4, 3);
    EXPECT_EQ(pseudo_supervised_loss(z1, z2, phat, mask, &dz1, &dz2), 0.0);
    for (double v : dz1.a) EXPECT_EQ(v, 0.0);
    for (double v : dz2.a) EXPECT_EQ(v, 0.0);
}

TEST(PseudoLoss, PerfectAgreementIsNearZero) {
    const Mat z = Mat::from_rows({{40.0, 0.0}});
    const Mat phat = Mat::from_rows({{1.0, 0.0}});
    RowMask mask;
    mask.on = {1};
    EXPECT_NEAR(pseudo_supervised_loss(z, z, phat, mask), 0.0, 1e-12);
}

TEST(PseudoLoss, RowPermutationInvariance) {
    Rng rng(4);
    const int n = 5, k = 3;
    const Mat z1 = random_mat(rng, n, k), z2 = random_mat(rng, n, k);
    const Mat phat = one_hot_rows(rng, n, k);
    RowMask mask;
    mask.on = {1, 0, 1, 1, 0};
    const double base = pseudo_supervised_loss(z1, z2, phat, mask);

    const std::vector<int> perm = {3, 0, 4, 1, 2};
    Mat pz1(n, k), pz2(n, k), pphat(n, k);
    RowMask pmask;
    pmask.on.resize(n);
    for (int i = 0; i < n; ++i) {
        pmask.on[i] = mask.on[perm[i]];
        for (int j = 0; j < k; ++j) {
            pz1(i, j) = z1(perm[i], j);
            pz2(i, j) = z2(perm[i], j);
            pphat(i, j) = phat(perm[i], j);
        }
    }
    EXPECT_NEAR(pseudo_supervised_loss(pz1, pz2, pphat, pmask), base, 1e-12);
}

// --- cutmix loss -------------------------------------------------------------

TEST(CutmixLoss, ZeroTargetRowContributesNothing) {
    Rng rng(5);
    const Mat z = random_mat(rng, 1, 3);
    const Mat t(1, 3, 0.0);
    Mat dz(1, 3);
    EXPECT_EQ(cutmix_loss(z, t, &dz), 0.0);
    for (double v : dz.a) EXPECT_EQ(v, 0.0);
}

TEST(CutmixLoss, DocumentedSoftTargetValue) {
    const Mat z = logits_of_probs({0.7, 0.3});
    const Mat t = Mat::from_rows({{0.7, 0.3}});
    const double want = -(0.7 * std::log(0.7) + 0.3 * std::log(0.3));
    EXPECT_NEAR(cutmix_loss(z, t), want, 1e-12);
    EXPECT_NEAR(cutmix_loss(z, t), 0.610864, 1e-6);
}

TEST(CutmixLoss, MatchingOneHotIsNearZero) {
    const Mat z = Mat::from_rows({{0.0, 40.0}});
    const Mat t = Mat::from_rows({{0.0, 1.0}});
    EXPECT_NEAR(cutmix_loss(z, t), 0.0, 1e-12);
}

TEST(CutmixLoss, LinearInTarget) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat z = random_mat(rng, 1, 4);
        const double eta = rng.uniform();
        const int a = rng.uniform_int(4), b = rng.uniform_int(4);
        Mat t(1, 4, 0.0);
        t(0, a) += eta;
        t(0, b) += 1.0 - eta;
        Mat ea(1, 4, 0.0), eb(1, 4, 0.0);
        ea(0, a) = 1.0;
        eb(0, b) = 1.0;
        const double combined = cutmix_loss(z, t);
        const double split = eta * cutmix_loss(z, ea) + (1.0 - eta) * cutmix_loss(z, eb);
        EXPECT_NEAR(combined, split, 1e-12);
    }
}

// --- gaussian similarity and the agreement loss ------------------------------

TEST(GaussianSimilarity, IdenticalVectorsGiveOne) {
    const std::vector<double> z = {1.0, -2.0, 3.0};
    EXPECT_DOUBLE_EQ(gaussian_similarity(z, z), 1.0);
}

TEST(GaussianSimilarity, LogTwoDistanceGivesHalf) {
    const std::vector<double> z1 = {std::sqrt(std::log(2.0)), 0.0};
    const std::vector<double> z2 = {0.0, 0.0};
    EXPECT_NEAR(gaussian_similarity(z1, z2), 0.5, 1e-12);
}

TEST(GaussianSimilarity, MonotoneDecay) {
    double prev = 1.0;
    for (double d = 0.5; d < 6.0; d += 0.5) {
        const std::vector<double> z1 = {d};
        const std::vector<double> z2 = {0.0};
        const double s = gaussian_similarity(z1, z2);
        EXPECT_LT(s, prev);
        EXPECT_GT(s, 0.0);
        prev = s;
    }
}

TEST(LowerLoss, IdenticalViewsGiveZero) {
    Rng rng(7);
    const Mat z = random_mat(rng, 3, 4);
    EXPECT_EQ(contrastive_lower_loss(z, z), 0.0);
}

TEST(LowerLoss, UnitRowDifferencesGiveOne) {
    Mat z1(3, 4, 0.0), z2(3, 4, 0.0);
    z1(0, 0) = 1.0;
    z1(1, 2) = 1.0;
    z1(2, 3) = 1.0;
    EXPECT_NEAR(contrastive_lower_loss(z1, z2), 1.0, 1e-15);
}

TEST(LowerLoss, DocumentedThreeFour) {
    const Mat z1 = Mat::from_rows({{3.0, 4.0}});
    const Mat z2 = Mat::from_rows({{0.0, 0.0}});
    EXPECT_NEAR(contrastive_lower_loss(z1, z2), 25.0, 1e-12);
}

TEST(LowerLoss, SymmetricInViews) {
    Rng rng(8);
    const Mat z1 = random_mat(rng, 4, 3), z2 = random_mat(rng, 4, 3);
    EXPECT_DOUBLE_EQ(contrastive_lower_loss(z1, z2), contrastive_lower_loss(z2, z1));
}

TEST(LowerLoss, EqualsNegativeMeanLogGaussianSimilarity) {
    Rng rng(9);
    const int n = 6, k = 4;
    const Mat z1 = random_mat(rng, n, k), z2 = random_mat(rng, n, k);
    double neg_mean_log = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = gaussian_similarity(std::span<const double>(z1.row(i), k),
                                             std::span<const double>(z2.row(i), k));
        neg_mean_log -= std::log(d) / n;
    }
    EXPECT_NEAR(contrastive_lower_loss(z1, z2), neg_mean_log, 1e-9);
}

// --- total loss ---------------------------------------------------------------

TEST(TotalLoss, DocumentedLambdaCombination) {
    const LossBreakdown b = total_loss(1.0, 1.0, 1.0, 1.0, 0.002);
    EXPECT_NEAR(b.total, 3.002, 1e-15);
    EXPECT_NEAR(b.l_upper, 3.0, 1e-15);
}

TEST(TotalLoss, LambdaZeroDisablesLowerBound) {
    const LossBreakdown b = total_loss(0.3, 0.2, 0.1, 123.0, 0.0);
    EXPECT_DOUBLE_EQ(b.total, b.l_upper);
}

TEST(TotalLoss, AllZero) {
    const LossBreakdown b = total_loss(0, 0, 0, 0, 0.002);
    EXPECT_EQ(b.total, 0.0);
}

TEST(TotalLoss, InvariantHolds) {
    Rng rng(10);
    for (int t = 0; t < 20; ++t) {
        const double s = rng.uniform(), p = rng.uniform(), c = rng.uniform(), l = rng.uniform();
        const double lam = rng.uniform();
        const LossBreakdown b = total_loss(s, p, c, l, lam);
        EXPECT_DOUBLE_EQ(b.l_upper, s + p + c);
        EXPECT_DOUBLE_EQ(b.total, b.l_upper + lam * l);
    }
}

// --- gradients against central finite differences ----------------------------

TEST(Gradients, SupervisedLossMatchesFd) {
    Rng rng(20);
    for (int t = 0; t < 20; ++t) {
        const int n = 1 + rng.uniform_int(4), k = 2 + rng.uniform_int(2);
        const Mat z = random_mat(rng, n, k);
        const Mat p = one_hot_rows(rng, n, k);
        Mat dz(n, k);
        supervised_loss(z, p, &dz);
        expect_grad_matches_fd([&](const Mat& zz) { return supervised_loss(zz, p); }, z, dz,
                               1e-5, 1e-4, "supervised");
    }
}

TEST(Gradients, PseudoLossMatchesFd) {
    Rng rng(21);
    for (int t = 0; t < 20; ++t) {
        const int n = 1 + rng.uniform_int(4), k = 2 + rng.uniform_int(2);
        const Mat z1 = random_mat(rng, n, k), z2 = random_mat(rng, n, k);
        const Mat phat = one_hot_rows(rng, n, k);
        RowMask mask;
        mask.on.resize(n);
        for (int i = 0; i < n; ++i) mask.on[i] = rng.coin() ? 1 : 0;
        Mat dz1(n, k), dz2(n, k);
        pseudo_supervised_loss(z1, z2, phat, mask, &dz1, &dz2);
        expect_grad_matches_fd(
            [&](const Mat& zz) { return pseudo_supervised_loss(zz, z2, phat, mask); }, z1, dz1,
            1e-5, 1e-4, "pseudo view1");
        expect_grad_matches_fd(
            [&](const Mat& zz) { return pseudo_supervised_loss(z1, zz, phat, mask); }, z2, dz2,
            1e-5, 1e-4, "pseudo view2");
    }
}

TEST(Gradients, CutmixLossMatchesFd) {
    Rng rng(22);
    for (int t = 0; t < 20; ++t) {
        const int n = 1 + rng.uniform_int(4), k = 2 + rng.uniform_int(2);
        const Mat z = random_mat(rng, n, k);
        Mat targets(n, k, 0.0);
        for (int i = 0; i < n; ++i) {
            const double eta = rng.uniform();
            targets(i, rng.uniform_int(k)) += eta;
            targets(i, rng.uniform_int(k)) += (1.0 - eta) * rng.uniform_int(2);  // sometimes lost mass
        }
        Mat dz(n, k);
        cutmix_loss(z, targets, &dz);
        expect_grad_matches_fd([&](const Mat& zz) { return cutmix_loss(zz, targets); }, z, dz,
                               1e-5, 1e-4, "cutmix");
    }
}

TEST(Gradients, LowerLossMatchesFd) {
    Rng rng(23);
    for (int t = 0; t < 20; ++t) {
        const int n = 1 + rng.uniform_int(4), k = 2 + rng.uniform_int(2);
        const Mat z1 = random_mat(rng, n, k), z2 = random_mat(rng, n, k);
        Mat d1(n, k), d2(n, k);
        contrastive_lower_loss(z1, z2, &d1, &d2);
        expect_grad_matches_fd([&](const Mat& zz) { return contrastive_lower_loss(zz, z2); }, z1,
                               d1, 1e-5, 1e-4, "lower view1");
        expect_grad_matches_fd([&](const Mat& zz) { return contrastive_lower_loss(z1, zz); }, z2,
                               d2, 1e-5, 1e-4, "lower view2");
    }
}

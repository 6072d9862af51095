#include <gtest/gtest.h>

#include <cmath>

#include "infomatch/model.hpp"
#include "infomatch/objective.hpp"
#include "test_support.hpp"

using namespace infomatch;

namespace {

ArchSpec tiny_arch() {
    ArchSpec a;
    a.input_height = 6;
    a.input_width = 6;
    a.input_channels = 1;
    a.class_count = 2;
    a.conv_channels = {2, 3};
    return a;
}

std::vector<Image> random_images(Rng& rng, int n, const ArchSpec& a) {
    std::vector<Image> imgs;
    for (int i = 0; i < n; ++i) {
        Image im(a.input_height, a.input_width, a.input_channels);
        for (float& v : im.pix) v = static_cast<float>(rng.uniform());
        imgs.push_back(std::move(im));
    }
    return imgs;
}

}  // namespace

TEST(InitParams, DeterministicGivenSeed) {
    const SmallConvNet net(tiny_arch());
    const ModelParams a = net.init_params(7);
    const ModelParams b = net.init_params(7);
    ASSERT_EQ(a.blocks.size(), b.blocks.size());
    for (size_t i = 0; i < a.blocks.size(); ++i) EXPECT_EQ(a.blocks[i].v, b.blocks[i].v);
}

TEST(InitParams, SeedSensitive) {
    const SmallConvNet net(tiny_arch());
    const ModelParams a = net.init_params(0);
    const ModelParams b = net.init_params(1);
    EXPECT_NE(a.find("conv0.weight").v, b.find("conv0.weight").v);
}

TEST(InitParams, BiasesZeroAtInit) {
    const SmallConvNet net(tiny_arch());
    const ModelParams p = net.init_params(3);
    for (const auto& name : {"conv0.bias", "conv1.bias", "head.bias"})
        for (float v : p.find(name).v) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, BatchIndependence) {
    const SmallConvNet net(tiny_arch());
    const ModelParams p = net.init_params(5);
    Rng rng(1);
    const auto imgs = random_images(rng, 8, tiny_arch());
    const Mat full = net.forward(p, imgs, true);
    const Mat single = net.forward(p, std::span<const Image>(imgs.data() + 3, 1), true);
    for (int j = 0; j < full.cols; ++j) EXPECT_DOUBLE_EQ(full(3, j), single(0, j));
}

TEST(Forward, ZeroParamsGiveZeroLogits) {
    const SmallConvNet net(tiny_arch());
    ModelParams p = net.init_params(5);
    for (auto& b : p.blocks)
        if (b.name != "input.std") std::fill(b.v.begin(), b.v.end(), 0.0f);
    Rng rng(2);
    const auto imgs = random_images(rng, 2, tiny_arch());
    const Mat z = net.forward(p, imgs, true);
    for (double v : z.a) EXPECT_EQ(v, 0.0);
}

TEST(Forward, FiniteInputsGiveFiniteLogits) {
    const SmallConvNet net(tiny_arch());
    const ModelParams p = net.init_params(11);
    Rng rng(3);
    const auto imgs = random_images(rng, 4, tiny_arch());
    for (double v : net.forward(p, imgs, true).a) EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, TrainModeDoesNotChangeOutputs) {
    const SmallConvNet net(tiny_arch());
    const ModelParams p = net.init_params(13);
    Rng rng(4);
    const auto imgs = random_images(rng, 3, tiny_arch());
    const Mat a = net.forward(p, imgs, true);
    const Mat b = net.forward(p, imgs, false);
    EXPECT_EQ(a.a, b.a);
}

TEST(Forward, ShapeMismatchRejected) {
    const SmallConvNet net(tiny_arch());
    const ModelParams p = net.init_params(1);
    std::vector<Image> bad = {Image(5, 6, 1)};
    EXPECT_THROW(net.forward(p, bad, true), ContractError);
}

TEST(EmaUpdate, DecayZeroCopiesParams) {
    const SmallConvNet net(tiny_arch());
    ModelParams shadow = net.init_params(1);
    const ModelParams params = net.init_params(2);
    ema_update(shadow, params, 0.0);
    for (size_t b = 0; b < shadow.blocks.size(); ++b) EXPECT_EQ(shadow.blocks[b].v, params.blocks[b].v);
}

TEST(EmaUpdate, DecayOneFreezesShadow) {
    const SmallConvNet net(tiny_arch());
    ModelParams shadow = net.init_params(1);
    const ModelParams before = shadow;
    ema_update(shadow, net.init_params(2), 1.0);
    for (size_t b = 0; b < shadow.blocks.size(); ++b) EXPECT_EQ(shadow.blocks[b].v, before.blocks[b].v);
}

TEST(EmaUpdate, DocumentedSingleStep) {
    ModelParamsT<double> shadow, params;
    shadow.blocks.push_back({"w", {1}, {0.0}, true, true});
    params.blocks.push_back({"w", {1}, {1.0}, true, true});
    ema_update(shadow, params, 0.999);
    EXPECT_NEAR(shadow.blocks[0].v[0], 0.001, 1e-15);
}

TEST(EmaUpdate, ClosedFormAfterRepeatedUpdates) {
    // t identical updates toward a constant: s_t = d^t s_0 + (1 - d^t) p
    ModelParamsT<double> shadow, params;
    shadow.blocks.push_back({"w", {2}, {0.25, -1.5}, true, true});
    params.blocks.push_back({"w", {2}, {1.0, 2.0}, true, true});
    const double d = 0.999;
    const int t = 1000;
    const ModelParamsT<double> s0 = shadow;
    for (int i = 0; i < t; ++i) ema_update(shadow, params, d);
    const double dt = std::pow(d, t);
    for (int j = 0; j < 2; ++j) {
        const double want = dt * s0.blocks[0].v[j] + (1.0 - dt) * params.blocks[0].v[j];
        EXPECT_NEAR(shadow.blocks[0].v[j], want, 1e-6);
    }
}

TEST(EmaUpdate, ShapeMismatchRejected) {
    const SmallConvNet net(tiny_arch());
    ModelParams shadow = net.init_params(1);
    ModelParams params = shadow;
    params.blocks[2].v.push_back(0.0f);
    params.blocks[2].shape = {static_cast<int>(params.blocks[2].v.size())};
    EXPECT_THROW(ema_update(shadow, params, 0.5), ContractError);
}

TEST(ChannelStats, ConstantChannelGetsUnitStd) {
    std::vector<Image> pool = {Image(4, 4, 2, 0.25f), Image(4, 4, 2, 0.25f)};
    const ChannelStats stats = compute_channel_stats(pool);
    for (int c = 0; c < 2; ++c) {
        EXPECT_NEAR(stats.mean[c], 0.25f, 1e-7);
        EXPECT_EQ(stats.stddev[c], 1.0f);
    }
}

TEST(ChannelStats, MatchesDirectComputation) {
    Rng rng(5);
    std::vector<Image> pool;
    for (int i = 0; i < 3; ++i) {
        Image im(2, 2, 1);
        for (float& v : im.pix) v = static_cast<float>(rng.uniform());
        pool.push_back(im);
    }
    double sum = 0.0, sq = 0.0;
    for (const auto& im : pool)
        for (float v : im.pix) {
            sum += v;
            sq += v * v;
        }
    const double mean = sum / 12.0;
    const double sd = std::sqrt(sq / 12.0 - mean * mean);
    const ChannelStats stats = compute_channel_stats(pool);
    EXPECT_NEAR(stats.mean[0], mean, 1e-6);
    EXPECT_NEAR(stats.stddev[0], sd, 1e-6);
}

TEST(ArchSpecJson, RoundTrip) {
    ArchSpec a = tiny_arch();
    a.lower_features = "penultimate";
    const ArchSpec b = ArchSpec::from_json(a.to_json());
    EXPECT_TRUE(a == b);
}

TEST(ArchSpecJson, ValidationCatchesNonsense) {
    ArchSpec a = tiny_arch();
    a.conv_channels.clear();
    EXPECT_THROW(a.validate(), ConfigError);
    a = tiny_arch();
    a.lower_features = "bogus";
    EXPECT_THROW(a.validate(), ConfigError);
}

// Full-network gradient check in double precision: backward against central
// finite differences through conv, pool, global average pool and the head.
TEST(Backward, MatchesFiniteDifferencesThroughWholeNet) {
    using DNet = SmallConvNetT<double>;
    const ArchSpec arch = tiny_arch();
    const DNet net(arch);
    ModelParamsT<double> params = net.init_params(17);
    ChannelStats stats;
    stats.mean = {0.4f};
    stats.stddev = {0.3f};
    set_input_standardization(params, stats);

    Rng rng(6);
    std::vector<Image> imgs;
    for (int i = 0; i < 2; ++i) {
        Image im(arch.input_height, arch.input_width, arch.input_channels);
        for (float& v : im.pix) v = static_cast<float>(rng.uniform());
        imgs.push_back(std::move(im));
    }
    Mat targets(2, 2, 0.0);
    targets(0, 0) = 1.0;
    targets(1, 1) = 1.0;

    const auto loss_of = [&](const ModelParamsT<double>& p) {
        return supervised_loss(net.forward(p, imgs, true), targets);
    };

    DNet::ForwardCache cache;
    const Mat z = net.forward(params, imgs, true, &cache);
    Mat dz(z.rows, z.cols);
    supervised_loss(z, targets, &dz);
    const ModelParamsT<double> grads = net.backward(params, cache, dz);

    const double h = 1e-6;
    for (size_t b = 0; b < params.blocks.size(); ++b) {
        if (!params.blocks[b].trainable) continue;
        for (size_t i = 0; i < params.blocks[b].v.size(); ++i) {
            ModelParamsT<double> pp = params, pm = params;
            pp.blocks[b].v[i] += h;
            pm.blocks[b].v[i] -= h;
            const double fd = (loss_of(pp) - loss_of(pm)) / (2.0 * h);
            const double an = grads.blocks[b].v[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
            EXPECT_NEAR(an, fd, 1e-4 * denom + 1e-7)
                << params.blocks[b].name << "[" << i << "]";
        }
    }
}

// Same check with the agreement loss attached to the penultimate features.
TEST(Backward, PenultimateInjectionMatchesFiniteDifferences) {
    using DNet = SmallConvNetT<double>;
    ArchSpec arch = tiny_arch();
    arch.lower_features = "penultimate";
    const DNet net(arch);
    const ModelParamsT<double> params = net.init_params(19);

    Rng rng(7);
    std::vector<Image> imgs;
    for (int i = 0; i < 2; ++i) {
        Image im(arch.input_height, arch.input_width, arch.input_channels);
        for (float& v : im.pix) v = static_cast<float>(rng.uniform());
        imgs.push_back(std::move(im));
    }
    Mat anchor(2, net.feature_dim());
    for (double& v : anchor.a) v = rng.uniform(-1.0, 1.0);

    const auto loss_of = [&](const ModelParamsT<double>& p) {
        DNet::ForwardCache cache;
        net.forward(p, imgs, true, &cache);
        const Mat f = penultimate_features(net, cache);
        return contrastive_lower_loss(f, anchor);
    };

    DNet::ForwardCache cache;
    const Mat z = net.forward(params, imgs, true, &cache);
    const Mat f = penultimate_features(net, cache);
    Mat df(f.rows, f.cols);
    contrastive_lower_loss(f, anchor, &df);
    Mat dz(z.rows, z.cols, 0.0);
    const ModelParamsT<double> grads = net.backward(params, cache, dz, &df);

    const double h = 1e-6;
    for (size_t b = 0; b < params.blocks.size(); ++b) {
        if (!params.blocks[b].trainable) continue;
        for (size_t i = 0; i < params.blocks[b].v.size(); ++i) {
            ModelParamsT<double> pp = params, pm = params;
            pp.blocks[b].v[i] += h;
            pm.blocks[b].v[i] -= h;
            const double fd = (loss_of(pp) - loss_of(pm)) / (2.0 * h);
            const double an = grads.blocks[b].v[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
            EXPECT_NEAR(an, fd, 1e-4 * denom + 1e-7)
                << params.blocks[b].name << "[" << i << "]";
        }
    }
}

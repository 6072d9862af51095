#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "infomatch/common.hpp"
#include "infomatch/image.hpp"
#include "infomatch/matrix.hpp"
#include "infomatch/rng.hpp"

namespace infomatch {

// Architecture descriptor for the reference conv net: a stack of 3x3 conv
// blocks (ReLU, 2x2 max pool between blocks), global average pool, linear
// head. Sized for desk-scale training; widths come from the config.
struct ArchSpec {
    int input_height = 16;
    int input_width = 16;
    int input_channels = 1;
    int class_count = 4;
    std::vector<int> conv_channels = {16, 32, 64};
    std::string lower_features = "logits";  // or "penultimate"

    bool operator==(const ArchSpec&) const = default;

    nlohmann::json to_json() const {
        return {{"input_height", input_height}, {"input_width", input_width},
                {"input_channels", input_channels}, {"class_count", class_count},
                {"conv_channels", conv_channels}, {"lower_features", lower_features}};
    }

    static ArchSpec from_json(const nlohmann::json& j) {
        ArchSpec a;
        a.input_height = j.at("input_height").get<int>();
        a.input_width = j.at("input_width").get<int>();
        a.input_channels = j.at("input_channels").get<int>();
        a.class_count = j.at("class_count").get<int>();
        a.conv_channels = j.at("conv_channels").get<std::vector<int>>();
        a.lower_features = j.at("lower_features").get<std::string>();
        return a;
    }

    void validate() const {
        if (input_height < 4 || input_width < 4 || input_channels < 1)
            throw ConfigError("ArchSpec: input must be at least 4x4x1");
        if (class_count < 2) throw ConfigError("ArchSpec: class_count must be >= 2");
        if (conv_channels.empty()) throw ConfigError("ArchSpec: need at least one conv block");
        for (int c : conv_channels)
            if (c < 1) throw ConfigError("ArchSpec: conv widths must be positive");
        if (lower_features != "logits" && lower_features != "penultimate")
            throw ConfigError(cat("ArchSpec: unknown lower_features '", lower_features, "'"));
    }
};

template <typename T>
struct ParamBlockT {
    std::string name;
    std::vector<int> shape;
    std::vector<T> v;
    bool trainable = true;
    bool decay = true;  // weight decay applies (off for biases and input stats)

    std::int64_t size() const {
        std::int64_t s = 1;
        for (int d : shape) s *= d;
        return s;
    }
};

template <typename T>
struct ModelParamsT {
    ArchSpec arch;
    std::vector<ParamBlockT<T>> blocks;

    ParamBlockT<T>& find(const std::string& name) {
        for (auto& b : blocks)
            if (b.name == name) return b;
        throw ContractError(cat("ModelParams: no block named ", name));
    }
    const ParamBlockT<T>& find(const std::string& name) const {
        for (const auto& b : blocks)
            if (b.name == name) return b;
        throw ContractError(cat("ModelParams: no block named ", name));
    }
};

using ModelParams = ModelParamsT<float>;

template <typename T>
bool same_block_shapes(const ModelParamsT<T>& a, const ModelParamsT<T>& b) {
    if (a.blocks.size() != b.blocks.size()) return false;
    for (size_t i = 0; i < a.blocks.size(); ++i)
        if (a.blocks[i].name != b.blocks[i].name || a.blocks[i].shape != b.blocks[i].shape)
            return false;
    return true;
}

// shadow' = decay * shadow + (1 - decay) * params, blockwise.
template <typename T>
void ema_update(ModelParamsT<T>& shadow, const ModelParamsT<T>& params, double decay) {
    require(decay >= 0.0 && decay <= 1.0, "ema_update: decay must be in [0,1]");
    require(same_block_shapes(shadow, params), "ema_update: shape mismatch");
    const T d = static_cast<T>(decay);
    const T one_minus = static_cast<T>(1.0 - decay);
    for (size_t b = 0; b < shadow.blocks.size(); ++b) {
        auto& s = shadow.blocks[b].v;
        const auto& p = params.blocks[b].v;
        for (size_t i = 0; i < s.size(); ++i) s[i] = d * s[i] + one_minus * p[i];
    }
}

struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> stddev;
};

// Per-channel statistics of an image pool. Constant channels get stddev 1 so
// standardization maps them to exactly zero.
inline ChannelStats compute_channel_stats(std::span<const Image> pool) {
    require(!pool.empty(), "compute_channel_stats: empty pool");
    const int channels = pool.front().channels;
    std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
    std::int64_t per_channel = 0;
    for (const auto& im : pool) {
        require(im.channels == channels, "compute_channel_stats: channel mismatch");
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < im.height; ++y)
                for (int x = 0; x < im.width; ++x) {
                    const double v = im.at(c, y, x);
                    sum[c] += v;
                    sq[c] += v * v;
                }
        per_channel += static_cast<std::int64_t>(pool.front().height) * pool.front().width;
    }
    ChannelStats stats;
    stats.mean.resize(channels);
    stats.stddev.resize(channels);
    for (int c = 0; c < channels; ++c) {
        const double m = sum[c] / static_cast<double>(per_channel);
        const double var = std::max(0.0, sq[c] / static_cast<double>(per_channel) - m * m);
        stats.mean[c] = static_cast<float>(m);
        const double sd = std::sqrt(var);
        stats.stddev[c] = sd < 1e-8 ? 1.0f : static_cast<float>(sd);
    }
    return stats;
}

template <typename T>
void set_input_standardization(ModelParamsT<T>& params, const ChannelStats& stats) {
    auto& mean = params.find("input.mean");
    auto& sd = params.find("input.std");
    require(mean.size() == static_cast<std::int64_t>(stats.mean.size()),
            "set_input_standardization: channel mismatch");
    for (size_t c = 0; c < stats.mean.size(); ++c) {
        mean.v[c] = static_cast<T>(stats.mean[c]);
        sd.v[c] = static_cast<T>(stats.stddev[c]);
    }
}

// ---------------------------------------------------------------------------
// Reference net. All heavy lifting is im2col + GEMM; backward mirrors the
// forward exactly, so gradients check against finite differences.
// ---------------------------------------------------------------------------

template <typename T>
class SmallConvNetT {
    using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Map = Eigen::Map<EMat>;
    using CMap = Eigen::Map<const EMat>;

public:
    explicit SmallConvNetT(ArchSpec arch) : arch_(std::move(arch)) {
        arch_.validate();
        plan_layers();
    }

    const ArchSpec& arch() const { return arch_; }
    int feature_dim() const { return arch_.conv_channels.back(); }

    ModelParamsT<T> init_params(std::uint64_t seed) const {
        ModelParamsT<T> p;
        p.arch = arch_;
        p.blocks.push_back({"input.mean", {arch_.input_channels},
                            std::vector<T>(arch_.input_channels, T(0)), false, false});
        p.blocks.push_back({"input.std", {arch_.input_channels},
                            std::vector<T>(arch_.input_channels, T(1)), false, false});
        int cin = arch_.input_channels;
        for (size_t l = 0; l < arch_.conv_channels.size(); ++l) {
            const int cout = arch_.conv_channels[l];
            ParamBlockT<T> w{cat("conv", l, ".weight"), {cout, cin, 3, 3},
                             std::vector<T>(static_cast<size_t>(cout) * cin * 9), true, true};
            fill_he_normal(w.v, cin * 9, mix_seed(seed, 0xc04, static_cast<std::uint64_t>(l)));
            p.blocks.push_back(std::move(w));
            p.blocks.push_back({cat("conv", l, ".bias"), {cout}, std::vector<T>(cout, T(0)), true, false});
            cin = cout;
        }
        const int f = feature_dim();
        ParamBlockT<T> w{"head.weight", {arch_.class_count, f},
                         std::vector<T>(static_cast<size_t>(arch_.class_count) * f), true, true};
        fill_he_normal(w.v, f, mix_seed(seed, 0xfc01));
        p.blocks.push_back(std::move(w));
        p.blocks.push_back({"head.bias", {arch_.class_count},
                            std::vector<T>(arch_.class_count, T(0)), true, false});
        return p;
    }

    struct ForwardCache {
        int n = 0;
        std::vector<std::vector<T>> col;      // per conv layer: n * K * HW
        std::vector<std::vector<T>> pre;      // per conv layer: n * C * HW (pre-ReLU)
        std::vector<std::vector<int>> pool_arg;  // per pooled layer: argmax into pre-pool plane
        std::vector<T> penult;                // n * F (global average pool output)
    };

    // Logits for a batch, row i = image i. train_mode is accepted for
    // interface parity; the reference net has no stochastic layers.
    Mat forward(const ModelParamsT<T>& params, std::span<const Image> images, bool train_mode,
                ForwardCache* cache = nullptr) const {
        (void)train_mode;
        require(same_arch(params), "forward: params built for a different architecture");
        const int n = static_cast<int>(images.size());
        require(n > 0, "forward: empty batch");
        for (const auto& im : images)
            require(im.height == arch_.input_height && im.width == arch_.input_width &&
                        im.channels == arch_.input_channels,
                    "forward: image shape does not match architecture input");

        ForwardCache local;
        ForwardCache& cc = cache ? *cache : local;
        cc.n = n;
        cc.col.assign(layers_.size(), {});
        cc.pre.assign(layers_.size(), {});
        cc.pool_arg.assign(layers_.size(), {});

        const auto& mean = params.find("input.mean").v;
        const auto& sdev = params.find("input.std").v;

        // standardized input activations, CHW per image
        std::vector<T> act(static_cast<size_t>(n) * arch_.input_channels * arch_.input_height *
                           arch_.input_width);
        {
            size_t o = 0;
            for (const auto& im : images)
                for (int c = 0; c < im.channels; ++c) {
                    const T m = mean[c];
                    const T s = sdev[c];
                    const size_t plane = static_cast<size_t>(im.height) * im.width;
                    const float* src = im.pix.data() + static_cast<size_t>(c) * plane;
                    for (size_t i = 0; i < plane; ++i)
                        act[o++] = (static_cast<T>(src[i]) - m) / s;
                }
        }

        int h = arch_.input_height, w = arch_.input_width, cin = arch_.input_channels;
        for (size_t l = 0; l < layers_.size(); ++l) {
            const Layer& L = layers_[l];
            const int hw = h * w;
            const int K = cin * 9;
            auto& col = cc.col[l];
            col.resize(static_cast<size_t>(n) * K * hw);
            for (int i = 0; i < n; ++i)
                im2col(act.data() + static_cast<size_t>(i) * cin * hw, cin, h, w,
                       col.data() + static_cast<size_t>(i) * K * hw);

            const auto& wblk = params.find(cat("conv", l, ".weight")).v;
            const auto& bblk = params.find(cat("conv", l, ".bias")).v;
            CMap W(wblk.data(), L.cout, K);

            auto& pre = cc.pre[l];
            pre.resize(static_cast<size_t>(n) * L.cout * hw);
            for (int i = 0; i < n; ++i) {
                CMap C(col.data() + static_cast<size_t>(i) * K * hw, K, hw);
                Map P(pre.data() + static_cast<size_t>(i) * L.cout * hw, L.cout, hw);
                P.noalias() = W * C;
                for (int co = 0; co < L.cout; ++co) P.row(co).array() += bblk[co];
            }

            // ReLU, then optional 2x2 max pool
            if (L.pooled) {
                const int h2 = h / 2, w2 = w / 2;
                auto& arg = cc.pool_arg[l];
                arg.resize(static_cast<size_t>(n) * L.cout * h2 * w2);
                std::vector<T> pooled(static_cast<size_t>(n) * L.cout * h2 * w2);
                for (int i = 0; i < n; ++i)
                    for (int c = 0; c < L.cout; ++c) {
                        const T* plane = pre.data() + (static_cast<size_t>(i) * L.cout + c) * hw;
                        T* outp = pooled.data() + (static_cast<size_t>(i) * L.cout + c) *
                                                      (static_cast<size_t>(h2) * w2);
                        int* argp = arg.data() + (static_cast<size_t>(i) * L.cout + c) *
                                                     (static_cast<size_t>(h2) * w2);
                        for (int oy = 0; oy < h2; ++oy)
                            for (int ox = 0; ox < w2; ++ox) {
                                int best = (2 * oy) * w + 2 * ox;
                                T bv = plane[best];
                                const int cand[3] = {(2 * oy) * w + 2 * ox + 1,
                                                     (2 * oy + 1) * w + 2 * ox,
                                                     (2 * oy + 1) * w + 2 * ox + 1};
                                for (int k : cand)
                                    if (plane[k] > bv) {
                                        bv = plane[k];
                                        best = k;
                                    }
                                const T r = bv > T(0) ? bv : T(0);
                                outp[oy * w2 + ox] = r;
                                argp[oy * w2 + ox] = best;
                            }
                    }
                act = std::move(pooled);
                h = h2;
                w = w2;
            } else {
                act.resize(pre.size());
                for (size_t i = 0; i < pre.size(); ++i) act[i] = pre[i] > T(0) ? pre[i] : T(0);
            }
            cin = L.cout;
        }

        // global average pool -> penultimate features
        const int f = feature_dim();
        const int hw = h * w;
        cc.penult.assign(static_cast<size_t>(n) * f, T(0));
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < f; ++c) {
                T s = T(0);
                const T* plane = act.data() + (static_cast<size_t>(i) * f + c) * hw;
                for (int k = 0; k < hw; ++k) s += plane[k];
                cc.penult[static_cast<size_t>(i) * f + c] = s / static_cast<T>(hw);
            }

        const auto& wfc = params.find("head.weight").v;
        const auto& bfc = params.find("head.bias").v;
        CMap Wf(wfc.data(), arch_.class_count, f);
        CMap Pen(cc.penult.data(), n, f);
        EMat logits = Pen * Wf.transpose();
        for (int j = 0; j < arch_.class_count; ++j) logits.col(j).array() += bfc[j];

        Mat out(n, arch_.class_count);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < arch_.class_count; ++j) out(i, j) = static_cast<double>(logits(i, j));
        if (!cache) cc = ForwardCache{};
        return out;
    }

    // Gradients w.r.t. every trainable block, given dL/dlogits (and optionally
    // dL/dpenultimate for losses attached to the embedding). Non-trainable
    // blocks get zero gradients so the block list stays aligned with params.
    ModelParamsT<T> backward(const ModelParamsT<T>& params, const ForwardCache& cache,
                             const Mat& dlogits, const Mat* dpenult = nullptr) const {
        require(same_arch(params), "backward: params built for a different architecture");
        const int n = cache.n;
        require(dlogits.rows == n && dlogits.cols == arch_.class_count,
                "backward: dlogits shape mismatch");

        ModelParamsT<T> grads = zeros_like(params);
        const int f = feature_dim();

        EMat dlog(n, arch_.class_count);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < arch_.class_count; ++j) dlog(i, j) = static_cast<T>(dlogits(i, j));

        const auto& wfc = params.find("head.weight").v;
        CMap Wf(wfc.data(), arch_.class_count, f);
        CMap Pen(cache.penult.data(), n, f);

        Map dWf(grads.find("head.weight").v.data(), arch_.class_count, f);
        dWf.noalias() = dlog.transpose() * Pen;
        auto& dbf = grads.find("head.bias").v;
        for (int j = 0; j < arch_.class_count; ++j) dbf[j] = dlog.col(j).sum();

        EMat dpen = dlog * Wf;
        if (dpenult) {
            require(dpenult->rows == n && dpenult->cols == f, "backward: dpenult shape mismatch");
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < f; ++c) dpen(i, c) += static_cast<T>((*dpenult)(i, c));
        }

        // replay the spatial shapes of every layer
        std::vector<int> hs, ws;
        int h = arch_.input_height, w = arch_.input_width;
        for (const Layer& L : layers_) {
            hs.push_back(h);
            ws.push_back(w);
            if (L.pooled) {
                h /= 2;
                w /= 2;
            }
        }

        // gradient flowing into the post-ReLU/post-pool activations of the
        // last layer, spread uniformly by the average pool
        const int hw_last = h * w;
        std::vector<T> dact(static_cast<size_t>(n) * f * hw_last);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < f; ++c) {
                const T g = dpen(i, c) / static_cast<T>(hw_last);
                T* plane = dact.data() + (static_cast<size_t>(i) * f + c) * hw_last;
                for (int k = 0; k < hw_last; ++k) plane[k] = g;
            }

        for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
            const Layer& L = layers_[l];
            const int hin = hs[l], win = ws[l];
            const int hw = hin * win;
            const int cin = L.cin;
            const int K = cin * 9;

            // undo pool + ReLU into dpre (n * cout * hw)
            std::vector<T> dpre(static_cast<size_t>(n) * L.cout * hw, T(0));
            const auto& pre = cache.pre[l];
            if (L.pooled) {
                const int h2 = hin / 2, w2 = win / 2;
                const auto& arg = cache.pool_arg[l];
                for (int i = 0; i < n; ++i)
                    for (int c = 0; c < L.cout; ++c) {
                        const size_t po = (static_cast<size_t>(i) * L.cout + c) *
                                          (static_cast<size_t>(h2) * w2);
                        const size_t qo = (static_cast<size_t>(i) * L.cout + c) * hw;
                        for (int k = 0; k < h2 * w2; ++k) {
                            const int src = arg[po + k];
                            if (pre[qo + src] > T(0)) dpre[qo + src] += dact[po + k];
                        }
                    }
            } else {
                for (size_t i = 0; i < dpre.size(); ++i)
                    if (pre[i] > T(0)) dpre[i] = dact[i];
            }

            const auto& wblk = params.find(cat("conv", l, ".weight")).v;
            CMap W(wblk.data(), L.cout, K);
            Map dW(grads.find(cat("conv", l, ".weight")).v.data(), L.cout, K);
            auto& db = grads.find(cat("conv", l, ".bias")).v;

            std::vector<T> dcol(static_cast<size_t>(n) * K * hw);
            const auto& col = cache.col[l];
            for (int i = 0; i < n; ++i) {
                CMap dY(dpre.data() + static_cast<size_t>(i) * L.cout * hw, L.cout, hw);
                CMap C(col.data() + static_cast<size_t>(i) * K * hw, K, hw);
                dW.noalias() += dY * C.transpose();
                for (int co = 0; co < L.cout; ++co) db[co] += dY.row(co).sum();
                Map dC(dcol.data() + static_cast<size_t>(i) * K * hw, K, hw);
                dC.noalias() = W.transpose() * dY;
            }

            if (l > 0) {
                dact.assign(static_cast<size_t>(n) * cin * hw, T(0));
                for (int i = 0; i < n; ++i)
                    col2im(dcol.data() + static_cast<size_t>(i) * K * hw, cin, hin, win,
                           dact.data() + static_cast<size_t>(i) * cin * hw);
            }
        }
        return grads;
    }

    ModelParamsT<T> zeros_like(const ModelParamsT<T>& params) const {
        ModelParamsT<T> z = params;
        for (auto& b : z.blocks) std::fill(b.v.begin(), b.v.end(), T(0));
        return z;
    }

private:
    struct Layer {
        int cin = 0;
        int cout = 0;
        bool pooled = false;
    };

    void plan_layers() {
        int cin = arch_.input_channels;
        int h = arch_.input_height, w = arch_.input_width;
        for (size_t l = 0; l < arch_.conv_channels.size(); ++l) {
            Layer L;
            L.cin = cin;
            L.cout = arch_.conv_channels[l];
            const bool last = l + 1 == arch_.conv_channels.size();
            L.pooled = !last && h >= 2 && w >= 2;
            if (L.pooled) {
                h /= 2;
                w /= 2;
            }
            layers_.push_back(L);
            cin = L.cout;
        }
    }

    bool same_arch(const ModelParamsT<T>& params) const { return params.arch == arch_; }

    void fill_he_normal(std::vector<T>& v, int fan_in, std::uint64_t seed) const {
        Rng rng(seed);
        const double s = std::sqrt(2.0 / fan_in);
        for (auto& x : v) x = static_cast<T>(s * rng.normal());
    }

    // 3x3, stride 1, zero pad 1; col rows ordered (ci, ky, kx)
    static void im2col(const T* x, int cin, int h, int w, T* col) {
        const int hw = h * w;
        size_t r = 0;
        for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx, ++r) {
                    T* dst = col + r * hw;
                    const T* plane = x + static_cast<size_t>(c) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) {
                            for (int xx = 0; xx < w; ++xx) dst[y * w + xx] = T(0);
                            continue;
                        }
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xx + kx - 1;
                            dst[y * w + xx] = (sx < 0 || sx >= w) ? T(0) : plane[sy * w + sx];
                        }
                    }
                }
    }

    static void col2im(const T* dcol, int cin, int h, int w, T* dx) {
        const int hw = h * w;
        size_t r = 0;
        for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx, ++r) {
                    const T* src = dcol + r * hw;
                    T* plane = dx + static_cast<size_t>(c) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (int xx = 0; xx < w; ++xx) {
                            const int sx = xx + kx - 1;
                            if (sx >= 0 && sx < w) plane[sy * w + sx] += src[y * w + xx];
                        }
                    }
                }
    }

    ArchSpec arch_;
    std::vector<Layer> layers_;
};

using SmallConvNet = SmallConvNetT<float>;

// Penultimate features from the cache as a double matrix (for the embedding
// variant of the agreement loss).
template <typename T>
Mat penultimate_features(const SmallConvNetT<T>& net, const typename SmallConvNetT<T>::ForwardCache& cache) {
    Mat f(cache.n, net.feature_dim());
    for (int i = 0; i < cache.n; ++i)
        for (int c = 0; c < net.feature_dim(); ++c)
            f(i, c) = static_cast<double>(cache.penult[static_cast<size_t>(i) * net.feature_dim() + c]);
    return f;
}

}  // namespace infomatch

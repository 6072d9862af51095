#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "infomatch/augment.hpp"
#include "infomatch/checkpoint.hpp"
#include "infomatch/config.hpp"
#include "infomatch/dataset.hpp"
#include "infomatch/metrics.hpp"
#include "infomatch/model.hpp"
#include "infomatch/objective.hpp"
#include "infomatch/threshold.hpp"

namespace infomatch {

// Truncated cosine decay: lr0 * cos(7*pi/16 * step/total). Never reaches
// zero over the schedule.
inline double lr_schedule(std::int64_t step, std::int64_t total_steps, double lr0) {
    require(step >= 0 && step <= std::max<std::int64_t>(total_steps, 1),
            "lr_schedule: step out of range");
    if (total_steps <= 0) return lr0;
    return lr0 * std::cos(7.0 * std::numbers::pi * static_cast<double>(step) /
                          (16.0 * static_cast<double>(total_steps)));
}

// One SGD(+Nesterov) step with decoupled weight decay on a parameter block:
// v <- mu*v + g; direction g + mu*v (Nesterov) or v; p <- p - lr*d - lr*wd*p.
inline void sgd_step_block(std::span<float> p, std::span<float> v, std::span<const float> g,
                           float lr, float mu, bool nesterov, float wd) {
    require(p.size() == v.size() && p.size() == g.size(), "sgd_step_block: size mismatch");
    for (size_t i = 0; i < p.size(); ++i) {
        v[i] = mu * v[i] + g[i];
        const float d = nesterov ? g[i] + mu * v[i] : v[i];
        const float p_prev = p[i];
        p[i] = p_prev - lr * d - lr * wd * p_prev;
    }
}

struct StepInfo {
    LossBreakdown losses;
    double lr = 0.0;
    double mask_rate = 0.0;
    double tau = 0.0;
    double pseudo_acc = 0.0;
};

struct EvalResult {
    double top1_err = 0.0;
    double top5_err = 0.0;
    bool has_top5 = false;
};

struct RunSummary {
    EvalResult final_ema;
    EvalResult final_raw;
    std::vector<MetricsRow> rows;  // rows logged by this invocation
};

namespace streamid {
// purpose salts for deriving independent rng streams from the run seed
constexpr std::uint64_t kParamsInit = 0x01;
constexpr std::uint64_t kLabeledBatches = 0x02;
constexpr std::uint64_t kUnlabeledBatches = 0x03;
constexpr std::uint64_t kLabeledAug = 0x04;
constexpr std::uint64_t kUnlabeledAug = 0x05;
}  // namespace streamid

class Trainer {
public:
    explicit Trainer(RunConfig cfg) : cfg_(std::move(cfg)), net_(build_arch(cfg_)) {
        load_data();
        labeled_stream_.emplace(static_cast<int>(split_.labeled.examples.size()),
                                cfg_.batch_labeled, mix_seed(cfg_.seed, streamid::kLabeledBatches),
                                BatchStream::Mode::kEmitShort);
        unlabeled_stream_.emplace(static_cast<int>(split_.unlabeled.images.size()),
                                  cfg_.batch_unlabeled,
                                  mix_seed(cfg_.seed, streamid::kUnlabeledBatches),
                                  BatchStream::Mode::kFullWrap);
    }

    const RunConfig& config() const { return cfg_; }
    const SmallConvNet& net() const { return net_; }
    const Split& split() const { return split_; }
    const std::vector<LabeledExample>& eval_set() const { return eval_set_; }

    TrainState init_state() const {
        TrainState state;
        state.params = net_.init_params(mix_seed(cfg_.seed, streamid::kParamsInit));
        set_input_standardization(state.params, pool_stats_);
        state.ema_shadow = state.params;
        state.momentum = net_.zeros_like(state.params);
        state.threshold = cfg_.threshold_mode == ThresholdMode::kFixed
                              ? ThresholdState::fixed(cfg_.threshold_fixed_value)
                              : ThresholdState::adaptive(class_count(), cfg_.threshold_momentum);
        state.step = 0;
        state.total_steps = cfg_.total_steps;
        state.seed = cfg_.seed;
        return state;
    }

    int class_count() const { return split_.labeled.class_count; }

    bool uses_unlabeled() const {
        return cfg_.enable_pseudo || cfg_.enable_cutmix || cfg_.enable_lower;
    }

    // One optimization step: views, weak forward without gradients,
    // pseudo-labels + threshold gate, gradient forwards, SGD(+Nesterov) with
    // decoupled weight decay at the scheduled rate, EMA update.
    StepInfo train_step(TrainState& state) const {
        const std::int64_t s = state.step;
        StepInfo info;
        info.lr = lr_schedule(s, state.total_steps, cfg_.lr0);

        // labeled batch
        const std::vector<int> lidx = labeled_stream_->batch(s);
        std::vector<Image> limgs(lidx.size());
        Mat targets(static_cast<int>(lidx.size()), class_count());
        for (size_t i = 0; i < lidx.size(); ++i) {
            const auto& ex = split_.labeled.examples[lidx[i]];
            if (cfg_.augment_labeled) {
                Rng rng(mix_seed(state.seed, streamid::kLabeledAug, static_cast<std::uint64_t>(s), i));
                limgs[i] = weak_augment(ex.image, cfg_.augment.weak, rng);
            } else {
                limgs[i] = ex.image;
            }
            targets(static_cast<int>(i), ex.label_index()) = 1.0;
        }

        // unlabeled views + confidence gate
        std::vector<ViewBundle> bundles;
        Mat phat;
        RowMask mask;
        if (uses_unlabeled()) {
            const std::vector<int> uidx = unlabeled_stream_->batch(s);
            std::vector<Image> uimgs(uidx.size());
            for (size_t i = 0; i < uidx.size(); ++i) uimgs[i] = split_.unlabeled.images[uidx[i]];
            bundles = make_view_bundles(uimgs, cfg_.augment,
                                        mix_seed(state.seed, streamid::kUnlabeledAug),
                                        static_cast<std::uint64_t>(s));

            std::vector<Image> weak_views(bundles.size());
            for (size_t i = 0; i < bundles.size(); ++i) weak_views[i] = bundles[i].weak;
            const Mat z_weak = net_.forward(state.params, weak_views, true);  // no gradients kept
            const Mat y_weak = softmax_rows(z_weak);
            phat = make_pseudolabels(y_weak);
            mask = compute_mask(state.threshold, y_weak);
            info.mask_rate = mask.rate();
            info.tau = state.threshold.mode == ThresholdMode::kFixed
                           ? state.threshold.fixed_value
                           : state.threshold.tau;

            int correct = 0, counted = 0;
            for (size_t i = 0; i < uidx.size(); ++i) {
                const int truth = split_.unlabeled.hidden_labels[uidx[i]];
                if (truth < 0) continue;
                ++counted;
                if (argmax_row(phat, static_cast<int>(i)) == truth) ++correct;
            }
            info.pseudo_acc = counted ? static_cast<double>(correct) / counted : 0.0;
        } else {
            info.tau = state.threshold.mode == ThresholdMode::kFixed ? state.threshold.fixed_value
                                                                     : state.threshold.tau;
        }

        // gradient-carrying forwards
        SmallConvNet::ForwardCache cache_l;
        const Mat z_l = net_.forward(state.params, limgs, true, &cache_l);
        Mat dz_l(z_l.rows, z_l.cols);
        const double l_sup = supervised_loss(z_l, targets, &dz_l);

        double l_pseudo = 0.0, l_cutmix = 0.0, l_lower = 0.0;
        SmallConvNet::ForwardCache cache1, cache2, cache_c;
        Mat z1, z2, z_c, dz1, dz2, dz_c;
        Mat dpen1, dpen2;
        const bool use_penult = cfg_.lower_features == "penultimate";

        if (!bundles.empty() && (cfg_.enable_pseudo || cfg_.enable_lower)) {
            std::vector<Image> s1(bundles.size()), s2(bundles.size());
            for (size_t i = 0; i < bundles.size(); ++i) {
                s1[i] = bundles[i].strong1;
                s2[i] = bundles[i].strong2;
            }
            z1 = net_.forward(state.params, s1, true, &cache1);
            z2 = net_.forward(state.params, s2, true, &cache2);
            dz1 = Mat(z1.rows, z1.cols);
            dz2 = Mat(z2.rows, z2.cols);
            if (cfg_.enable_pseudo)
                l_pseudo = pseudo_supervised_loss(z1, z2, phat, mask, &dz1, &dz2);
            if (cfg_.enable_lower) {
                if (use_penult) {
                    const Mat f1 = penultimate_features(net_, cache1);
                    const Mat f2 = penultimate_features(net_, cache2);
                    dpen1 = Mat(f1.rows, f1.cols);
                    dpen2 = Mat(f2.rows, f2.cols);
                    l_lower = contrastive_lower_loss(f1, f2, &dpen1, &dpen2);
                    scale(dpen1, cfg_.lambda);
                    scale(dpen2, cfg_.lambda);
                } else {
                    Mat df1(z1.rows, z1.cols), df2(z2.rows, z2.cols);
                    l_lower = contrastive_lower_loss(z1, z2, &df1, &df2);
                    add_scaled(dz1, df1, cfg_.lambda);
                    add_scaled(dz2, df2, cfg_.lambda);
                }
            }
        }

        if (!bundles.empty() && cfg_.enable_cutmix) {
            std::vector<Image> cimgs(bundles.size());
            Mat mixed(static_cast<int>(bundles.size()), class_count());
            for (size_t i = 0; i < bundles.size(); ++i) {
                cimgs[i] = bundles[i].cutmix;
                const int r = bundles[i].partner_index;
                const std::vector<double> mrow = mix_pseudolabels(
                    std::span<const double>(phat.row(static_cast<int>(i)), phat.cols),
                    std::span<const double>(phat.row(r), phat.cols), mask.on[i] != 0,
                    mask.on[r] != 0, bundles[i].eta);
                for (int j = 0; j < class_count(); ++j) mixed(static_cast<int>(i), j) = mrow[j];
            }
            z_c = net_.forward(state.params, cimgs, true, &cache_c);
            dz_c = Mat(z_c.rows, z_c.cols);
            l_cutmix = cutmix_loss(z_c, mixed, &dz_c);
        }

        info.losses = total_loss(l_sup, l_pseudo, l_cutmix, l_lower, cfg_.lambda);
        if (!info.losses.finite())
            throw std::runtime_error(cat(
                "train_step: non-finite loss at step ", s, " (l_sup=", info.losses.l_sup,
                " l_pseudo=", info.losses.l_pseudo, " l_cutmix=", info.losses.l_cutmix,
                " l_lower=", info.losses.l_lower, " total=", info.losses.total, ")"));

        // backward, fixed accumulation order; all-zero gradients are skipped
        // (backward is linear, zero in means zero out)
        ModelParams grads = net_.backward(state.params, cache_l, dz_l);
        if (z1.rows > 0) {
            if (any_nonzero(dz1) || (use_penult && any_nonzero(dpen1)))
                accumulate(grads, net_.backward(state.params, cache1, dz1,
                                                use_penult && dpen1.rows ? &dpen1 : nullptr));
            if (any_nonzero(dz2) || (use_penult && any_nonzero(dpen2)))
                accumulate(grads, net_.backward(state.params, cache2, dz2,
                                                use_penult && dpen2.rows ? &dpen2 : nullptr));
        }
        if (z_c.rows > 0 && any_nonzero(dz_c))
            accumulate(grads, net_.backward(state.params, cache_c, dz_c));

        sgd_update(state, grads, info.lr);
        ema_update(state.ema_shadow, state.params, cfg_.ema_decay);
        state.step += 1;
        return info;
    }

    EvalResult evaluate(const ModelParams& params) const {
        return evaluate_on(params, eval_set_);
    }

    EvalResult evaluate_on(const ModelParams& params, std::span<const LabeledExample> set) const {
        require(!set.empty(), "evaluate: empty evaluation set");
        const int k = class_count();
        Mat probs(static_cast<int>(set.size()), k);
        Mat labels(static_cast<int>(set.size()), k);
        for (size_t start = 0; start < set.size(); start += cfg_.eval_batch) {
            const size_t end = std::min(set.size(), start + cfg_.eval_batch);
            std::vector<Image> imgs;
            imgs.reserve(end - start);
            for (size_t i = start; i < end; ++i) imgs.push_back(set[i].image);
            const Mat z = net_.forward(params, imgs, false);
            const Mat y = softmax_rows(z);
            for (size_t i = start; i < end; ++i) {
                for (int j = 0; j < k; ++j) probs(static_cast<int>(i), j) = y(static_cast<int>(i - start), j);
                labels(static_cast<int>(i), set[i].label_index()) = 1.0;
            }
        }
        EvalResult r;
        r.top1_err = top_k_error(probs, labels, 1);
        if (k >= 5) {
            r.top5_err = top_k_error(probs, labels, 5);
            r.has_top5 = true;
        }
        return r;
    }

    // Full loop with logging and checkpointing. run_dir may be empty (no
    // artifacts). Resumes from wherever state.step points.
    RunSummary run(TrainState& state, const std::string& run_dir = "") const {
        const bool persist = !run_dir.empty();
        std::filesystem::path dir(run_dir);
        if (persist) {
            std::filesystem::create_directories(dir);
            std::ofstream snap(dir / "config.json");
            if (!snap) throw IoError(cat("run: cannot write config snapshot in ", run_dir));
            snap << cfg_.resolved.dump(2) << "\n";
        }

        RunSummary summary;
        StepInfo last_info;
        while (state.step < state.total_steps) {
            last_info = train_step(state);
            const std::int64_t done = state.step;
            if (cfg_.log_interval > 0 &&
                (done % cfg_.log_interval == 0 || done == state.total_steps)) {
                const EvalResult ema = evaluate(state.ema_shadow);
                const EvalResult raw = evaluate(state.params);
                MetricsRow row;
                row.step = done;
                row.lr = last_info.lr;
                row.l_sup = last_info.losses.l_sup;
                row.l_pseudo = last_info.losses.l_pseudo;
                row.l_cutmix = last_info.losses.l_cutmix;
                row.l_lower = last_info.losses.l_lower;
                row.total = last_info.losses.total;
                row.mask_rate = last_info.mask_rate;
                row.tau = last_info.tau;
                row.top1_err_ema = ema.top1_err;
                row.top1_err_raw = raw.top1_err;
                row.pseudo_acc = last_info.pseudo_acc;
                summary.rows.push_back(row);
            }
            if (persist && cfg_.checkpoint_interval > 0 &&
                (done % cfg_.checkpoint_interval == 0 || done == state.total_steps)) {
                save_checkpoint(state, (dir / cat("checkpoint_", done, ".ckpt")).string());
                save_checkpoint(state, (dir / "checkpoint_last.ckpt").string());
            }
        }

        summary.final_ema = evaluate(state.ema_shadow);
        summary.final_raw = evaluate(state.params);
        if (persist) {
            write_metrics_csv(summary.rows, (dir / "metrics.csv").string());
            save_checkpoint(state, (dir / "checkpoint_last.ckpt").string());
            nlohmann::json report = {
                {"steps", state.step},
                {"top1_err_ema", summary.final_ema.top1_err},
                {"top1_err_raw", summary.final_raw.top1_err},
                {"final_mask_rate", last_info.mask_rate},
                {"final_total_loss", last_info.losses.total},
            };
            if (summary.final_ema.has_top5) {
                report["top5_err_ema"] = summary.final_ema.top5_err;
                report["top5_err_raw"] = summary.final_raw.top5_err;
            }
            std::ofstream rep(dir / "report.json");
            rep << report.dump(2) << "\n";
        }
        return summary;
    }

    // Checkpoint compatibility gate used by eval/resume entry points.
    void check_state(const TrainState& state) const {
        if (!(state.params.arch == net_.arch()))
            throw CheckpointError("checkpoint architecture does not match the configured model");
    }

private:
    static ArchSpec build_arch(const RunConfig& cfg) {
        ArchSpec arch;
        if (cfg.data_source == "cifar10") {
            arch.input_height = kCifarHeight;
            arch.input_width = kCifarWidth;
            arch.input_channels = kCifarChannels;
            arch.class_count = kCifarClasses;
        } else {
            arch.input_height = cfg.synthetic.height;
            arch.input_width = cfg.synthetic.width;
            arch.input_channels = cfg.synthetic.channels;
            arch.class_count = cfg.synthetic.class_count;
        }
        arch.conv_channels = cfg.conv_channels;
        arch.lower_features = cfg.lower_features;
        return arch;
    }

    void load_data() {
        Dataset train;
        if (cfg_.data_source == "cifar10") {
            if (cfg_.cifar_train.empty())
                throw ConfigError("config key 'data.cifar_train' is required for data.source=cifar10");
            train = load_cifar10_binary(cfg_.cifar_train);
            if (!cfg_.cifar_test.empty())
                eval_set_ = load_cifar10_binary(cfg_.cifar_test).labeled;
        } else {
            train = generate_synthetic_dataset(cfg_.synthetic);
            SyntheticSpec eval_spec = cfg_.synthetic;
            eval_spec.per_class = cfg_.eval_per_class;
            eval_spec.noise_seed = cfg_.eval_seed;
            eval_set_ = generate_synthetic_dataset(eval_spec).labeled;
        }
        if (eval_set_.empty())
            throw ConfigError("no evaluation set: provide data.cifar_test or synthetic_eval");
        split_ = split_labeled(train, cfg_.labels_per_class, cfg_.split_seed);
        pool_stats_ = compute_channel_stats(split_.unlabeled.images);
    }

    static void scale(Mat& m, double a) {
        for (double& v : m.a) v *= a;
    }
    static void add_scaled(Mat& into, const Mat& from, double a) {
        for (size_t i = 0; i < into.a.size(); ++i) into.a[i] += a * from.a[i];
    }
    static bool any_nonzero(const Mat& m) {
        for (double v : m.a)
            if (v != 0.0) return true;
        return false;
    }
    static void accumulate(ModelParams& into, const ModelParams& g) {
        for (size_t b = 0; b < into.blocks.size(); ++b)
            for (size_t i = 0; i < into.blocks[b].v.size(); ++i)
                into.blocks[b].v[i] += g.blocks[b].v[i];
    }

    // Weight decay skips biases and the input statistics.
    void sgd_update(TrainState& state, const ModelParams& grads, double lr) const {
        const float flr = static_cast<float>(lr);
        const float mu = static_cast<float>(cfg_.sgd_momentum);
        const float wd = static_cast<float>(cfg_.weight_decay);
        for (size_t b = 0; b < state.params.blocks.size(); ++b) {
            auto& pb = state.params.blocks[b];
            if (!pb.trainable) continue;
            sgd_step_block(pb.v, state.momentum.blocks[b].v, grads.blocks[b].v, flr, mu,
                           cfg_.nesterov, pb.decay ? wd : 0.0f);
        }
    }

    RunConfig cfg_;
    SmallConvNet net_;
    Split split_;
    std::vector<LabeledExample> eval_set_;
    ChannelStats pool_stats_;
    std::optional<BatchStream> labeled_stream_;
    std::optional<BatchStream> unlabeled_stream_;
};

}  // namespace infomatch

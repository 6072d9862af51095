#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "infomatch/common.hpp"
#include "infomatch/matrix.hpp"

namespace infomatch {

// One-hot pseudo-labels from weak-view probabilities; ties break toward the
// lowest class index (argmax_row scans left to right with strict >).
inline Mat make_pseudolabels(const Mat& y_weak) {
    Mat phat(y_weak.rows, y_weak.cols, 0.0);
    for (int i = 0; i < y_weak.rows; ++i) phat(i, argmax_row(y_weak, i)) = 1.0;
    return phat;
}

// Per-row confidence gate. Row i is on iff its max probability clears the
// threshold assigned to its predicted class.
struct RowMask {
    std::vector<std::uint8_t> on;

    int rows() const { return static_cast<int>(on.size()); }
    double rate() const {
        if (on.empty()) return 0.0;
        double s = 0.0;
        for (auto g : on) s += g;
        return s / static_cast<double>(on.size());
    }
};

inline RowMask fixed_mask(const Mat& y_weak, double tau) {
    require(tau >= 0.0 && tau <= 1.0, "fixed_mask: tau must be in [0,1]");
    RowMask m;
    m.on.resize(y_weak.rows);
    for (int i = 0; i < y_weak.rows; ++i) m.on[i] = max_row(y_weak, i) >= tau ? 1 : 0;
    return m;
}

enum class ThresholdMode { kFixed, kAdaptive };

struct ThresholdState {
    ThresholdMode mode = ThresholdMode::kAdaptive;
    double fixed_value = 0.95;
    double momentum = 0.999;
    double tau = 0.0;               // running global threshold
    std::vector<double> ptilde;     // running per-class mean probabilities

    static ThresholdState fixed(double value) {
        ThresholdState s;
        s.mode = ThresholdMode::kFixed;
        s.fixed_value = value;
        return s;
    }

    // Self-adaptive rule starts from the uninformative 1/k state.
    static ThresholdState adaptive(int class_count, double momentum = 0.999) {
        ThresholdState s;
        s.mode = ThresholdMode::kAdaptive;
        s.momentum = momentum;
        s.tau = 1.0 / class_count;
        s.ptilde.assign(class_count, 1.0 / class_count);
        return s;
    }
};

// tau' and ptilde' are running averages of the batch mean max-confidence and
// the batch mean probability vector. Empty batches leave the state unchanged.
inline void update_adaptive_state(ThresholdState& state, const Mat& y_weak) {
    if (state.mode != ThresholdMode::kAdaptive) return;
    if (y_weak.rows == 0) return;
    require(static_cast<int>(state.ptilde.size()) == y_weak.cols,
            "update_adaptive_state: class count mismatch");

    double mean_max = 0.0;
    std::vector<double> mean_prob(y_weak.cols, 0.0);
    for (int i = 0; i < y_weak.rows; ++i) {
        mean_max += max_row(y_weak, i);
        for (int j = 0; j < y_weak.cols; ++j) mean_prob[j] += y_weak(i, j);
    }
    mean_max /= y_weak.rows;
    for (double& v : mean_prob) v /= y_weak.rows;

    const double m = state.momentum;
    state.tau = m * state.tau + (1.0 - m) * mean_max;
    for (int j = 0; j < y_weak.cols; ++j)
        state.ptilde[j] = m * state.ptilde[j] + (1.0 - m) * mean_prob[j];
}

inline std::vector<double> class_thresholds(const ThresholdState& state) {
    std::vector<double> taus(state.ptilde.size(), state.tau);
    const double pmax = *std::max_element(state.ptilde.begin(), state.ptilde.end());
    if (pmax <= 0.0) return taus;  // degenerate state falls back to the global tau
    for (size_t j = 0; j < taus.size(); ++j) taus[j] = state.ptilde[j] / pmax * state.tau;
    return taus;
}

inline RowMask adaptive_mask(const ThresholdState& state, const Mat& y_weak) {
    require(state.mode == ThresholdMode::kAdaptive, "adaptive_mask: state is not adaptive");
    const std::vector<double> taus = class_thresholds(state);
    require(static_cast<int>(taus.size()) == y_weak.cols, "adaptive_mask: class count mismatch");
    RowMask m;
    m.on.resize(y_weak.rows);
    for (int i = 0; i < y_weak.rows; ++i) {
        const int cls = argmax_row(y_weak, i);
        m.on[i] = y_weak(i, cls) >= taus[cls] ? 1 : 0;
    }
    return m;
}

// Single entry point used by the trainer: updates state (adaptive mode) and
// returns the gate for the batch.
inline RowMask compute_mask(ThresholdState& state, const Mat& y_weak) {
    if (state.mode == ThresholdMode::kFixed) return fixed_mask(y_weak, state.fixed_value);
    update_adaptive_state(state, y_weak);
    return adaptive_mask(state, y_weak);
}

}  // namespace infomatch

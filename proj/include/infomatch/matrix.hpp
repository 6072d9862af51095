#pragma once

#include <cmath>
#include <initializer_list>
#include <vector>

#include "infomatch/common.hpp"

namespace infomatch {

// Dense row-major double matrix for the loss / threshold / bounds math.
// Model activations stay float; everything probabilistic runs in double.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rws) {
        Mat m(static_cast<int>(rws.size()), rws.size() ? static_cast<int>(rws.begin()->size()) : 0);
        int i = 0;
        for (const auto& r : rws) {
            require(static_cast<int>(r.size()) == m.cols, "Mat::from_rows: ragged rows");
            int j = 0;
            for (double v : r) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline int argmax_row(const Mat& m, int i) {
    int best = 0;
    for (int j = 1; j < m.cols; ++j)
        if (m(i, j) > m(i, best)) best = j;
    return best;
}

inline double max_row(const Mat& m, int i) {
    double best = m(i, 0);
    for (int j = 1; j < m.cols; ++j)
        if (m(i, j) > best) best = m(i, j);
    return best;
}

// Rowwise exp-normalize with max subtraction; rows sum to 1 for any finite
// logit magnitude.
inline Mat softmax_rows(const Mat& z) {
    Mat y(z.rows, z.cols);
    for (int i = 0; i < z.rows; ++i) {
        const double m = max_row(z, i);
        double sum = 0.0;
        for (int j = 0; j < z.cols; ++j) {
            y(i, j) = std::exp(z(i, j) - m);
            sum += y(i, j);
        }
        for (int j = 0; j < z.cols; ++j) y(i, j) /= sum;
    }
    return y;
}

inline Mat log_softmax_rows(const Mat& z) {
    Mat lp(z.rows, z.cols);
    for (int i = 0; i < z.rows; ++i) {
        const double m = max_row(z, i);
        double sum = 0.0;
        for (int j = 0; j < z.cols; ++j) sum += std::exp(z(i, j) - m);
        const double lse = m + std::log(sum);
        for (int j = 0; j < z.cols; ++j) lp(i, j) = z(i, j) - lse;
    }
    return lp;
}

}  // namespace infomatch

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "infomatch/common.hpp"
#include "infomatch/matrix.hpp"
#include "infomatch/rng.hpp"

namespace infomatch {

// Exactly enumerable discrete distributions used to verify the entropy-bound
// claims numerically. Natural logarithms throughout.

struct DiscreteConditional {
    std::vector<double> px;  // input marginal, sums to 1
    Mat pcx;                 // row i = p(c | x_i), row-stochastic

    int input_size() const { return static_cast<int>(px.size()); }
    int class_count() const { return pcx.cols; }
};

struct DiscreteJoint {
    Mat p;  // a x b, nonnegative, sums to 1

    std::vector<double> row_marginal() const {
        std::vector<double> m(p.rows, 0.0);
        for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < p.cols; ++j) m[i] += p(i, j);
        return m;
    }
    std::vector<double> col_marginal() const {
        std::vector<double> m(p.cols, 0.0);
        for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < p.cols; ++j) m[j] += p(i, j);
        return m;
    }
};

constexpr double kDistTol = 1e-9;

inline void validate(const DiscreteConditional& dc) {
    require(!dc.px.empty() && dc.pcx.rows == dc.input_size(), "DiscreteConditional: shape mismatch");
    double s = 0.0;
    for (double v : dc.px) {
        require(v >= 0.0, "DiscreteConditional: negative marginal");
        s += v;
    }
    require(std::abs(s - 1.0) <= kDistTol, "DiscreteConditional: marginal does not sum to 1");
    for (int i = 0; i < dc.pcx.rows; ++i) {
        double r = 0.0;
        for (int j = 0; j < dc.pcx.cols; ++j) {
            require(dc.pcx(i, j) >= 0.0, "DiscreteConditional: negative probability");
            r += dc.pcx(i, j);
        }
        require(std::abs(r - 1.0) <= kDistTol, "DiscreteConditional: row does not sum to 1");
    }
}

inline void validate(const DiscreteJoint& joint) {
    double s = 0.0;
    for (double v : joint.p.a) {
        require(v >= 0.0, "DiscreteJoint: negative probability");
        s += v;
    }
    require(std::abs(s - 1.0) <= kDistTol, "DiscreteJoint: does not sum to 1");
}

inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// H(C|X) by exact enumeration.
inline double conditional_entropy_exact(const DiscreteConditional& dc) {
    double h = 0.0;
    for (int i = 0; i < dc.input_size(); ++i) {
        double hx = 0.0;
        for (int j = 0; j < dc.class_count(); ++j) hx -= xlogx(dc.pcx(i, j));
        h += dc.px[i] * hx;
    }
    return h;
}

// Exact cross entropy -E_px E_p(c|x) ln sigma(c|x). Gibbs: >= H(C|X), with
// equality iff sigma == p wherever p has mass.
inline double cross_entropy_exact(const DiscreteConditional& dc_true,
                                  const DiscreteConditional& dc_model) {
    require(dc_true.input_size() == dc_model.input_size() &&
                dc_true.class_count() == dc_model.class_count(),
            "cross_entropy_exact: shape mismatch");
    double ce = 0.0;
    for (int i = 0; i < dc_true.input_size(); ++i) {
        for (int j = 0; j < dc_true.class_count(); ++j) {
            const double t = dc_true.px[i] * dc_true.pcx(i, j);
            if (t == 0.0) continue;
            const double q = dc_model.pcx(i, j);
            ce += q > 0.0 ? -t * std::log(q) : std::numeric_limits<double>::infinity();
        }
    }
    return ce;
}

struct McNll {
    double value = 0.0;
    bool hit_zero_probability = false;  // model assigned zero mass to a sampled pair
};

// Monte-Carlo average negative log-likelihood of dc_model under samples from
// dc_true: (1/n) sum -ln model(c|x).
inline McNll avg_nll_mc(const DiscreteConditional& dc_true, const DiscreteConditional& dc_model,
                        std::int64_t n_samples, std::uint64_t seed) {
    require(dc_true.input_size() == dc_model.input_size() &&
                dc_true.class_count() == dc_model.class_count(),
            "avg_nll_mc: shape mismatch");
    Rng rng(mix_seed(seed, 0x4d63u));
    McNll out;
    double acc = 0.0;
    for (std::int64_t s = 0; s < n_samples; ++s) {
        // inverse-CDF draws for x then c|x
        double u = rng.uniform();
        int x = 0;
        for (; x + 1 < dc_true.input_size(); ++x) {
            if (u < dc_true.px[x]) break;
            u -= dc_true.px[x];
        }
        double v = rng.uniform();
        int c = 0;
        for (; c + 1 < dc_true.class_count(); ++c) {
            if (v < dc_true.pcx(x, c)) break;
            v -= dc_true.pcx(x, c);
        }
        const double q = dc_model.pcx(x, c);
        if (q <= 0.0) {
            out.hit_zero_probability = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
        acc -= std::log(q);
    }
    out.value = acc / static_cast<double>(n_samples);
    return out;
}

// JSD(joint || product of marginals), the half-mixture convention: range [0, ln 2].
inline double jsd_exact(const DiscreteJoint& joint) {
    const auto pr = joint.row_marginal();
    const auto pc = joint.col_marginal();
    double jsd = 0.0;
    for (int i = 0; i < joint.p.rows; ++i) {
        for (int j = 0; j < joint.p.cols; ++j) {
            const double p = joint.p(i, j);
            const double q = pr[i] * pc[j];
            const double m = 0.5 * (p + q);
            if (p > 0.0) jsd += 0.5 * p * std::log(p / m);
            if (q > 0.0) jsd += 0.5 * q * std::log(q / m);
        }
    }
    return jsd;
}

// Discriminator functional E_joint ln d + E_product ln(1-d), evaluated by
// exact enumeration. Never exceeds jsd_exact(joint); its supremum over d is
// 2*JSD - 2 ln 2, attained at d = p/(p+q).
inline double jsd_lower_bound(const DiscreteJoint& joint, const Mat& discriminator) {
    require(discriminator.rows == joint.p.rows && discriminator.cols == joint.p.cols,
            "jsd_lower_bound: discriminator shape mismatch");
    const auto pr = joint.row_marginal();
    const auto pc = joint.col_marginal();
    double val = 0.0;
    for (int i = 0; i < joint.p.rows; ++i) {
        for (int j = 0; j < joint.p.cols; ++j) {
            const double d = discriminator(i, j);
            require(d > 0.0 && d < 1.0, "jsd_lower_bound: discriminator must be strictly inside (0,1)");
            val += joint.p(i, j) * std::log(d) + pr[i] * pc[j] * std::log(1.0 - d);
        }
    }
    return val;
}

// Pointwise-optimal discriminator d* = p/(p+q); the functional there equals
// 2*JSD - 2 ln 2 analytically.
inline double jsd_variational_optimum(const DiscreteJoint& joint) {
    const auto pr = joint.row_marginal();
    const auto pc = joint.col_marginal();
    double val = 0.0;
    for (int i = 0; i < joint.p.rows; ++i) {
        for (int j = 0; j < joint.p.cols; ++j) {
            const double p = joint.p(i, j);
            const double q = pr[i] * pc[j];
            if (p + q == 0.0) continue;
            if (p > 0.0) val += p * std::log(p / (p + q));
            if (q > 0.0) val += q * std::log(q / (p + q));
        }
    }
    return val;
}

// Cell-independent grid search over discriminator values in (0,1).
inline double jsd_supremum_grid(const DiscreteJoint& joint, int grid_points) {
    require(grid_points >= 2, "jsd_supremum_grid: need at least 2 grid points");
    const auto pr = joint.row_marginal();
    const auto pc = joint.col_marginal();
    double val = 0.0;
    for (int i = 0; i < joint.p.rows; ++i) {
        for (int j = 0; j < joint.p.cols; ++j) {
            const double p = joint.p(i, j);
            const double q = pr[i] * pc[j];
            double best = -std::numeric_limits<double>::infinity();
            for (int g = 1; g <= grid_points; ++g) {
                const double d = static_cast<double>(g) / (grid_points + 1);
                const double v = (p > 0.0 ? p * std::log(d) : 0.0) +
                                 (q > 0.0 ? q * std::log(1.0 - d) : 0.0);
                best = std::max(best, v);
            }
            if (p == 0.0 && q == 0.0) best = 0.0;
            val += best;
        }
    }
    return val;
}

// Tilted family sigma_s(c|x) proportional to p(c|x)^s; recovers p at s = 1.
inline DiscreteConditional tilt_conditional(const DiscreteConditional& dc, double s) {
    DiscreteConditional out = dc;
    for (int i = 0; i < dc.pcx.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < dc.pcx.cols; ++j) {
            out.pcx(i, j) = dc.pcx(i, j) > 0.0 ? std::pow(dc.pcx(i, j), s) : 0.0;
            sum += out.pcx(i, j);
        }
        for (int j = 0; j < dc.pcx.cols; ++j) out.pcx(i, j) /= sum;
    }
    return out;
}

// Uniform-simplex random instances (iid exponential weights, normalized).
inline DiscreteConditional random_conditional(Rng& rng, int input_size, int class_count) {
    DiscreteConditional dc;
    dc.px.resize(input_size);
    dc.pcx = Mat(input_size, class_count);
    double s = 0.0;
    for (double& v : dc.px) {
        v = rng.gamma(1.0);
        s += v;
    }
    for (double& v : dc.px) v /= s;
    for (int i = 0; i < input_size; ++i) {
        double r = 0.0;
        for (int j = 0; j < class_count; ++j) {
            dc.pcx(i, j) = rng.gamma(1.0);
            r += dc.pcx(i, j);
        }
        for (int j = 0; j < class_count; ++j) dc.pcx(i, j) /= r;
    }
    return dc;
}

inline DiscreteJoint random_joint(Rng& rng, int rows, int cols) {
    DiscreteJoint joint;
    joint.p = Mat(rows, cols);
    double s = 0.0;
    for (double& v : joint.p.a) {
        v = rng.gamma(1.0);
        s += v;
    }
    for (double& v : joint.p.a) v /= s;
    return joint;
}

inline DiscreteJoint independent_joint(const std::vector<double>& pr, const std::vector<double>& pc) {
    DiscreteJoint joint;
    joint.p = Mat(static_cast<int>(pr.size()), static_cast<int>(pc.size()));
    for (int i = 0; i < joint.p.rows; ++i)
        for (int j = 0; j < joint.p.cols; ++j) joint.p(i, j) = pr[i] * pc[j];
    return joint;
}

inline Mat random_discriminator(Rng& rng, int rows, int cols) {
    Mat d(rows, cols);
    for (double& v : d.a) v = rng.uniform(0.02, 0.98);
    return d;
}

}  // namespace infomatch

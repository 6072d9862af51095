#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "infomatch/common.hpp"
#include "infomatch/matrix.hpp"
#include "infomatch/threshold.hpp"

namespace infomatch {

// Fraction of rows whose true class is outside the k_top highest-probability
// classes; ties rank the lower class index first.
inline double top_k_error(const Mat& probs, const Mat& labels, int k_top) {
    require(probs.same_shape(labels), "top_k_error: shape mismatch");
    if (k_top < 1 || k_top > probs.cols)
        throw ConfigError(cat("top_k_error: k_top ", k_top, " out of range for ", probs.cols, " classes"));
    if (probs.rows == 0) return 0.0;
    int wrong = 0;
    for (int i = 0; i < probs.rows; ++i) {
        const int truth = [&] {
            for (int j = 0; j < labels.cols; ++j)
                if (labels(i, j) == 1.0) return j;
            throw ContractError("top_k_error: label row is not one-hot");
        }();
        int rank = 0;
        for (int j = 0; j < probs.cols; ++j) {
            if (probs(i, j) > probs(i, truth)) ++rank;
            else if (probs(i, j) == probs(i, truth) && j < truth) ++rank;
        }
        if (rank >= k_top) ++wrong;
    }
    return static_cast<double>(wrong) / probs.rows;
}

inline double utilization(const RowMask& mask) { return mask.rate(); }

struct MetricsRow {
    std::int64_t step = 0;
    double lr = 0.0;
    double l_sup = 0.0;
    double l_pseudo = 0.0;
    double l_cutmix = 0.0;
    double l_lower = 0.0;
    double total = 0.0;
    double mask_rate = 0.0;
    double tau = 0.0;
    double top1_err_ema = 0.0;
    double top1_err_raw = 0.0;
    double pseudo_acc = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "step,lr,l_sup,l_pseudo,l_cutmix,l_lower,total,mask_rate,tau,top1_err_ema,top1_err_raw,pseudo_acc";

namespace detail {

// shortest representation that parses back to the exact same double
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError(cat("metrics CSV: bad number '", s, "'"));
    return v;
}

}  // namespace detail

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError(cat("write_metrics_csv: cannot open ", path));
    out << kMetricsCsvHeader << "\n";
    for (const auto& r : rows) {
        out << r.step << ',' << detail::format_double(r.lr) << ','
            << detail::format_double(r.l_sup) << ',' << detail::format_double(r.l_pseudo) << ','
            << detail::format_double(r.l_cutmix) << ',' << detail::format_double(r.l_lower) << ','
            << detail::format_double(r.total) << ',' << detail::format_double(r.mask_rate) << ','
            << detail::format_double(r.tau) << ',' << detail::format_double(r.top1_err_ema) << ','
            << detail::format_double(r.top1_err_raw) << ',' << detail::format_double(r.pseudo_acc)
            << "\n";
    }
    if (!out) throw IoError(cat("write_metrics_csv: write failed for ", path));
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(cat("read_metrics_csv: cannot open ", path));
    std::string line;
    if (!std::getline(in, line)) throw FormatError("metrics CSV: missing header");
    if (line != kMetricsCsvHeader) throw FormatError(cat("metrics CSV: unexpected header '", line, "'"));
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (f.size() != 12) throw FormatError(cat("metrics CSV: expected 12 fields, got ", f.size()));
        MetricsRow r;
        r.step = std::stoll(f[0]);
        r.lr = detail::parse_double(f[1]);
        r.l_sup = detail::parse_double(f[2]);
        r.l_pseudo = detail::parse_double(f[3]);
        r.l_cutmix = detail::parse_double(f[4]);
        r.l_lower = detail::parse_double(f[5]);
        r.total = detail::parse_double(f[6]);
        r.mask_rate = detail::parse_double(f[7]);
        r.tau = detail::parse_double(f[8]);
        r.top1_err_ema = detail::parse_double(f[9]);
        r.top1_err_raw = detail::parse_double(f[10]);
        r.pseudo_acc = detail::parse_double(f[11]);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// SVG line charts (no plotting dependency). Empty input yields empty axes.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::string& ylabel, const std::vector<double>& xs,
                            const std::vector<double>& ys) {
    constexpr int W = 640, H = 400, ML = 60, MR = 20, MT = 40, MB = 40;
    std::ofstream out(path);
    if (!out) throw IoError(cat("emit_plots: cannot open ", path));

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!xs.empty()) {
        xmin = *std::min_element(xs.begin(), xs.end());
        xmax = *std::max_element(xs.begin(), xs.end());
        ymin = *std::min_element(ys.begin(), ys.end());
        ymax = *std::max_element(ys.begin(), ys.end());
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;
    }
    const auto px = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    const auto py = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">" << title
        << "</text>\n";
    out << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
        << H - MB << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">step</text>\n";
    out << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << H / 2 << ")\">" << ylabel << "</text>\n";
    if (!xs.empty()) {
        out << "<text x=\"" << ML << "\" y=\"" << H - MB + 16 << "\" font-size=\"10\">" << format_double(xmin) << "</text>\n";
        out << "<text x=\"" << W - MR << "\" y=\"" << H - MB + 16 << "\" text-anchor=\"end\" font-size=\"10\">"
            << format_double(xmax) << "</text>\n";
        out << "<text x=\"" << ML - 4 << "\" y=\"" << H - MB << "\" text-anchor=\"end\" font-size=\"10\">"
            << format_double(ymin) << "</text>\n";
        out << "<text x=\"" << ML - 4 << "\" y=\"" << MT + 10 << "\" text-anchor=\"end\" font-size=\"10\">"
            << format_double(ymax) << "</text>\n";
        out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < xs.size(); ++i) out << px(xs[i]) << ',' << py(ys[i]) << ' ';
        out << "\"/>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError(cat("emit_plots: write failed for ", path));
}

}  // namespace detail

// Renders top-1 accuracy (EMA model) and unlabeled-data utilization curves.
inline std::vector<std::string> emit_plots(const std::string& csv_path, const std::string& out_dir) {
    const std::vector<MetricsRow> rows = read_metrics_csv(csv_path);
    std::filesystem::create_directories(out_dir);
    std::vector<double> steps, acc, util;
    for (const auto& r : rows) {
        steps.push_back(static_cast<double>(r.step));
        acc.push_back(1.0 - r.top1_err_ema);
        util.push_back(r.mask_rate);
    }
    const std::string acc_path = (std::filesystem::path(out_dir) / "accuracy.svg").string();
    const std::string util_path = (std::filesystem::path(out_dir) / "utilization.svg").string();
    detail::write_svg_chart(acc_path, "Top-1 accuracy (EMA)", "accuracy", steps, acc);
    detail::write_svg_chart(util_path, "Unlabeled data utilization", "mask rate", steps, util);
    return {acc_path, util_path};
}

}  // namespace infomatch

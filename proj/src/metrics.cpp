#include "pelfa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace pelfa {

ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw ContractViolation("confusion: predictions/labels length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool p = predictions[i] != 0, y = labels[i] != 0;
        if (p && y)
            ++c.tp;
        else if (p && !y)
            ++c.fp;
        else if (!p && y)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

MetricReport classification_metrics(const ConfusionCounts& c) {
    MetricReport r;
    r.n_samples = c.total();
    auto ratio = [&r](long num, long den) -> double {
        if (den == 0) {
            r.zero_denominator = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    r.accuracy = ratio(c.tp + c.tn, c.total());
    r.precision = ratio(c.tp, c.tp + c.fp);
    r.recall = ratio(c.tp, c.tp + c.fn);
    r.specificity = ratio(c.tn, c.tn + c.fp);
    const double pr = r.precision + r.recall;
    if (pr == 0.0) {
        r.zero_denominator = true;
        r.f1 = 0.0;
    } else {
        r.f1 = 2.0 * r.precision * r.recall / pr;
    }
    return r;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw ContractViolation("auc: scores/labels length mismatch");
    long pos = 0, neg = 0;
    for (int y : labels) (y != 0 ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw ContractViolation("auc: undefined, both classes must be present");

    // average ranks (ties share the mean rank), then the Mann-Whitney statistic
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mean_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mean_rank;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k] != 0) rank_sum_pos += rank[k];
    const double u = rank_sum_pos - static_cast<double>(pos) * (pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

namespace {
void mask_counts(const Tensor& a, const Tensor& b, double& inter, double& sa, double& sb) {
    require_same_shape(a, b, "mask metrics");
    inter = sa = sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool fa = a[i] > 0.5, fb = b[i] > 0.5;
        inter += fa && fb;
        sa += fa;
        sb += fb;
    }
}
}  // namespace

double dice_score(const Tensor& a, const Tensor& b) {
    double inter, sa, sb;
    mask_counts(a, b, inter, sa, sb);
    if (sa + sb == 0.0) return 1.0;
    return 2.0 * inter / (sa + sb);
}

double iou(const Tensor& a, const Tensor& b) {
    double inter, sa, sb;
    mask_counts(a, b, inter, sa, sb);
    const double uni = sa + sb - inter;
    if (uni == 0.0) return 1.0;
    return inter / uni;
}

std::vector<AggregateRow> aggregate_folds(const std::vector<MetricReport>& reports) {
    if (reports.size() < 2)
        throw ContractViolation("aggregate_folds: need at least 2 fold reports");
    const std::vector<std::pair<std::string, double MetricReport::*>> fields = {
        {"accuracy", &MetricReport::accuracy},   {"precision", &MetricReport::precision},
        {"recall", &MetricReport::recall},       {"specificity", &MetricReport::specificity},
        {"f1", &MetricReport::f1},               {"auc", &MetricReport::auc},
    };
    std::vector<AggregateRow> rows;
    const double n = static_cast<double>(reports.size());
    for (const auto& [name, field] : fields) {
        AggregateRow row;
        row.metric = name;
        double s = 0.0;
        bool all_equal = true;
        for (const auto& r : reports) {
            s += r.*field;
            all_equal = all_equal && (r.*field == reports.front().*field);
        }
        row.mean = all_equal ? reports.front().*field : s / n;
        double sq = 0.0;
        for (const auto& r : reports) {
            const double d = r.*field - row.mean;
            sq += d * d;
        }
        row.variance = sq / n;
        row.stddev = std::sqrt(row.variance);
        row.sample_variance = sq / (n - 1.0);
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::string fmt_cell(const AggregateRow& row) {
    char buf[64];
    if (row.metric == "auc")
        std::snprintf(buf, sizeof(buf), "%.4f (%.4f)", row.mean, row.variance);
    else
        std::snprintf(buf, sizeof(buf), "%.2f%% (%.2f%%)", row.mean * 100.0,
                      row.variance * 100.0);
    return buf;
}

const char* kHeader[] = {"Accuracy (Variance)", "Precision (Variance)",   "Recall (Variance)",
                         "Specificity (Variance)", "F1 Score (Variance)", "AUC (Variance)"};

}  // namespace

std::string render_table_markdown(
    const std::vector<std::pair<std::string, std::vector<AggregateRow>>>& subsets) {
    std::string out = "| Fracture Type |";
    for (const char* h : kHeader) out += std::string(" ") + h + " |";
    out += "\n|---|---|---|---|---|---|---|\n";
    for (const auto& [subset, rows] : subsets) {
        out += "| " + subset + " |";
        for (const auto& row : rows) out += " " + fmt_cell(row) + " |";
        out += "\n";
    }
    return out;
}

std::string render_table_csv(
    const std::vector<std::pair<std::string, std::vector<AggregateRow>>>& subsets) {
    std::string out = "fracture_type";
    for (const char* h : kHeader) {
        out += ",";
        out += h;
    }
    out += "\n";
    for (const auto& [subset, rows] : subsets) {
        out += subset;
        for (const auto& row : rows) out += "," + fmt_cell(row);
        out += "\n";
    }
    return out;
}

}  // namespace pelfa

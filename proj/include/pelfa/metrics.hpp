#pragma once

#include <string>
#include <vector>

#include "pelfa/tensor.hpp"

namespace pelfa {

struct ConfusionCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

// Positive class = fracture = 1.
ConfusionCounts confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

struct MetricReport {
    double accuracy = 0, precision = 0, recall = 0, specificity = 0, f1 = 0, auc = 0;
    long n_samples = 0;
    int fold = -1;
    bool has_auc = false;
    // set when any metric hit the metric=0-on-zero-denominator convention
    bool zero_denominator = false;
};

MetricReport classification_metrics(const ConfusionCounts& c);

// Mann-Whitney AUC with ties counted 1/2, computed from average ranks.
// Throws ContractViolation unless both classes are present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Overlap metrics on binary masks (values {0,1}); both-empty pairs score 1.
double dice_score(const Tensor& a, const Tensor& b);
double iou(const Tensor& a, const Tensor& b);

struct AggregateRow {
    std::string metric;
    double mean = 0;
    double variance = 0;         // population
    double stddev = 0;           // sqrt(population variance)
    double sample_variance = 0;  // n-1 denominator
};

// Per-metric mean / variance / std across folds, in Table-1 column order
// (accuracy, precision, recall, specificity, f1, auc).
std::vector<AggregateRow> aggregate_folds(const std::vector<MetricReport>& reports);

// "mean% (variance%)" table rows, one per subset, AUC reported raw.
std::string render_table_markdown(
    const std::vector<std::pair<std::string, std::vector<AggregateRow>>>& subsets);
std::string render_table_csv(
    const std::vector<std::pair<std::string, std::vector<AggregateRow>>>& subsets);

}  // namespace pelfa

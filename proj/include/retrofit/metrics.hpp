#pragma once

#include "retrofit/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace retrofit {

struct ConfusionCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

struct LabelMetrics {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

struct MetricsReport {
    std::vector<ConfusionCounts> counts;  // per label
    std::vector<LabelMetrics> per_label;
    LabelMetrics macro;                   // unweighted mean over labels
};

/// 1 iff p >= threshold. Threshold must lie in (0, 1).
Matrix binarize(const Matrix& probabilities, double threshold = 0.5);

/// Per-label confusion metrics and macro averages. Precision, recall and F1 are 0
/// when their denominator is 0.
MetricsReport evaluate(const Matrix& predicted, const Matrix& truth);

LabelMetrics metrics_from_counts(const ConfusionCounts& c);

struct MetricsRow {
    std::string train_data;
    std::string test_data;
    MetricsReport report;
};

/// Aligned text table: Train data | Test data | Accuracy | Precision | Recall | F1 score.
std::string format_metrics_table(const std::vector<MetricsRow>& rows);

void to_json(nlohmann::json& j, const MetricsReport& r);

}  // namespace retrofit

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ocad::metrics {

// Fraud is the positive class throughout.
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
};

// Standard formulas; every 0/0 case (including an MCC zero denominator) is
// defined as 0 so degenerate predictors stay comparable.
MetricReport metric_report(const ConfusionMatrix& cm);

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (FPR, TPR), (0,0) .. (1,1)
    double auc = 0.0;
};

// Threshold sweep over all distinct scores with trapezoidal AUC; tied scores
// share rank, matching a Mann-Whitney statistic with 0.5 tie credit.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

std::string report_csv_header();
std::string report_csv_row(const MetricReport& report);

}  // namespace ocad::metrics

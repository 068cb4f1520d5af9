#include "ocad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ocad/errors.hpp"

namespace ocad::metrics {

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw DimensionError("confusion: prediction/label lengths differ");
    if (predictions.empty()) throw DimensionError("confusion: empty input");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i];
        const int y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1))
            throw ConfigError("confusion: entries must be 0 or 1");
        if (p == 1 && y == 1)
            ++cm.tp;
        else if (p == 1 && y == 0)
            ++cm.fp;
        else if (p == 0 && y == 0)
            ++cm.tn;
        else
            ++cm.fn;
    }
    return cm;
}

namespace {

double ratio_or_zero(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

MetricReport metric_report(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ConfigError("metric_report: empty confusion matrix");
    const double tp = static_cast<double>(cm.tp);
    const double fp = static_cast<double>(cm.fp);
    const double tn = static_cast<double>(cm.tn);
    const double fn = static_cast<double>(cm.fn);

    MetricReport r;
    r.accuracy = (tp + tn) / (tp + fp + tn + fn);
    r.precision = ratio_or_zero(tp, tp + fp);
    r.recall = ratio_or_zero(tp, tp + fn);
    r.f1 = ratio_or_zero(2.0 * r.precision * r.recall, r.precision + r.recall);
    // Product in double: counts up to ~3e5 stay far below the overflow range.
    const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    r.mcc = ratio_or_zero(tp * tn - fp * fn, den);
    return r;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DimensionError("roc_auc: score/label lengths differ");
    double positives = 0.0, negatives = 0.0;
    for (int y : labels) {
        if (y == 1)
            positives += 1.0;
        else
            negatives += 1.0;
    }
    if (positives == 0.0 || negatives == 0.0)
        throw ConfigError("roc_auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    double tp = 0.0, fp = 0.0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        // Consume the whole tie group before emitting a point.
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]] == 1)
                tp += 1.0;
            else
                fp += 1.0;
            ++i;
        }
        const double tpr = tp / positives;
        const double fpr = fp / negatives;
        curve.auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        curve.points.emplace_back(fpr, tpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    return curve;
}

std::string report_csv_header() { return "accuracy,precision,recall,f1,mcc"; }

std::string report_csv_row(const MetricReport& report) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f", report.accuracy, report.precision,
                  report.recall, report.f1, report.mcc);
    return buf;
}

}  // namespace ocad::metrics

#include "moevl/metrics.hpp"

#include <limits>
#include <string>

#include "moevl/errors.hpp"

namespace moevl {

std::int64_t MetricsReport::at(int true_label, int predicted) const {
    if (true_label < 0 || true_label >= n_classes || predicted < 0 || predicted >= n_classes) {
        throw IndexError("confusion cell (" + std::to_string(true_label) + ", " +
                         std::to_string(predicted) + ") outside " + std::to_string(n_classes) +
                         " classes");
    }
    return confusion[static_cast<std::size_t>(true_label) * n_classes + predicted];
}

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels, int n_classes) {
    if (predictions.empty()) throw ContractError("metrics need at least one prediction");
    if (predictions.size() != labels.size()) {
        throw ContractError("got " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(labels.size()) + " labels");
    }
    if (n_classes <= 0) throw ConfigError("metrics need a positive class count");

    MetricsReport report;
    report.n_classes = n_classes;
    report.count = static_cast<std::int64_t>(labels.size());
    report.confusion.assign(static_cast<std::size_t>(n_classes) * n_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= n_classes) {
            throw IndexError("label " + std::to_string(labels[i]) + " outside " +
                             std::to_string(n_classes) + " classes");
        }
        if (predictions[i] < 0 || predictions[i] >= n_classes) {
            throw IndexError("prediction " + std::to_string(predictions[i]) + " outside " +
                             std::to_string(n_classes) + " classes");
        }
        ++report.confusion[static_cast<std::size_t>(labels[i]) * n_classes + predictions[i]];
    }

    std::int64_t diagonal = 0;
    double recall_sum = 0.0;
    int present = 0;
    report.per_class_recall.assign(static_cast<std::size_t>(n_classes),
                                   std::numeric_limits<double>::quiet_NaN());
    for (int c = 0; c < n_classes; ++c) {
        std::int64_t row_total = 0;
        for (int j = 0; j < n_classes; ++j) row_total += report.at(c, j);
        diagonal += report.at(c, c);
        if (row_total > 0) {
            const double recall =
                static_cast<double>(report.at(c, c)) / static_cast<double>(row_total);
            report.per_class_recall[static_cast<std::size_t>(c)] = recall;
            recall_sum += recall;
            ++present;
        }
    }
    report.war = static_cast<double>(diagonal) / static_cast<double>(report.count);
    report.uar = recall_sum / present;
    return report;
}

}  // namespace moevl

#pragma once

#include <cstdint>
#include <vector>

namespace moevl {

// Confusion-matrix metrics. WAR is overall accuracy (recall weighted by class
// frequency); UAR averages per-class recall with equal class weight. Classes
// with no true samples carry NaN recall and are left out of UAR.
struct MetricsReport {
    int n_classes = 0;
    std::vector<std::int64_t> confusion;  // [C x C] row = true label, col = prediction
    std::vector<double> per_class_recall;
    double war = 0.0;
    double uar = 0.0;
    std::int64_t count = 0;

    std::int64_t at(int true_label, int predicted) const;
};

MetricsReport compute_metrics(const std::vector<int>& predictions,
                              const std::vector<int>& labels, int n_classes);

}  // namespace moevl

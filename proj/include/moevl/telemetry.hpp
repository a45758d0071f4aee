#pragma once

#include <cstdint>
#include <vector>

#include "moevl/dataset.hpp"
#include "moevl/model.hpp"

namespace moevl {

// Routing telemetry for the hybrid projector: where does each domain's
// traffic go? Weights are averaged per token (every merged visual token
// counts once, regardless of which sample it came from).
struct DomainGate {
    double emotion_weight = 0.0;
    double general_weight = 0.0;
    std::int64_t tokens = 0;
};

struct GateReport {
    DomainGate general;  // over general-domain samples
    DomainGate emotion;  // over emotion-domain samples
};

// Runs eval-mode forwards over the dataset and aggregates the gate trace by
// sample domain. Only the hybrid projector has a gate to report.
GateReport gate_report(const ToyModel& model, const std::vector<SyntheticSample>& samples);

}  // namespace moevl

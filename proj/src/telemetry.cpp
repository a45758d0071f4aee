#include "moevl/telemetry.hpp"

#include "moevl/errors.hpp"

namespace moevl {

GateReport gate_report(const ToyModel& model, const std::vector<SyntheticSample>& samples) {
    if (model.projector.kind != ProjectorKind::Hybrid) {
        throw CapabilityError("projector '" +
                              std::string(projector_kind_name(model.projector.kind)) +
                              "' has no gate to report");
    }
    if (samples.empty()) throw ContractError("gate report needs at least one sample");

    double sums[2][2] = {};  // [domain][expert], expert 0 = emotion, 1 = general
    std::int64_t tokens[2] = {};
    for (const auto& sample : samples) {
        auto result = model_forward(model, sample.embeddings, sample.text);
        const int d = sample.domain == Domain::General ? 0 : 1;
        for (double g : result.gate_trace) {
            sums[d][0] += g;
            sums[d][1] += 1.0 - g;
            ++tokens[d];
        }
    }

    GateReport report;
    for (DomainGate* gate : {&report.general, &report.emotion}) {
        const int d = gate == &report.general ? 0 : 1;
        gate->tokens = tokens[d];
        if (tokens[d] > 0) {
            gate->emotion_weight = sums[d][0] / static_cast<double>(tokens[d]);
            gate->general_weight = sums[d][1] / static_cast<double>(tokens[d]);
        }
    }
    return report;
}

}  // namespace moevl

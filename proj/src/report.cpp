#include "moevl/report.hpp"

#include <cmath>
#include <fstream>

#include "moevl/errors.hpp"
#include "moevl/numfmt.hpp"

namespace moevl {

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string recall_cell(double r) { return std::isnan(r) ? "nan" : fmt_double(r); }

}  // namespace

std::string metrics_text(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::string out;
    for (const auto& [name, report] : rows) {
        out += name + ": n=" + std::to_string(report.count) +
               " war=" + fmt_double(report.war) + " uar=" + fmt_double(report.uar) + "\n";
        out += "  recall:";
        for (double r : report.per_class_recall) out += " " + recall_cell(r);
        out += "\n";
    }
    return out;
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    if (rows.empty()) throw ContractError("metrics csv needs at least one row");
    const int n_classes = rows.front().second.n_classes;
    std::string out = "split,count,war,uar";
    for (int c = 0; c < n_classes; ++c) out += ",recall_" + std::to_string(c);
    out += "\n";
    for (const auto& [name, report] : rows) {
        out += name + "," + std::to_string(report.count) + "," + fmt_double(report.war) +
               "," + fmt_double(report.uar);
        for (double r : report.per_class_recall) out += "," + recall_cell(r);
        out += "\n";
    }
    return out;
}

std::string gate_text(const GateReport& report) {
    auto row = [](const char* domain, const DomainGate& gate) {
        return std::string(domain) + ": emotion_weight=" + fmt_double(gate.emotion_weight) +
               " general_weight=" + fmt_double(gate.general_weight) +
               " tokens=" + std::to_string(gate.tokens) + "\n";
    };
    return row("general", report.general) + row("emotion", report.emotion);
}

std::string gate_csv(const GateReport& report) {
    auto row = [](const char* domain, const DomainGate& gate) {
        return std::string(domain) + "," + fmt_double(gate.emotion_weight) + "," +
               fmt_double(gate.general_weight) + "," + std::to_string(gate.tokens) + "\n";
    };
    return "domain,emotion_weight,general_weight,tokens\n" +
           row("general", report.general) + row("emotion", report.emotion);
}

std::string training_text(const RunReport& report) {
    std::string out = std::string(stage_name(report.stage)) + ": epochs=" +
                      std::to_string(report.epochs) + " steps=" +
                      std::to_string(report.steps) + "\n";
    if (!report.epoch_loss.empty()) {
        out += "first_batch_loss=" + fmt_double(report.first_batch_loss) + "\n";
        out += "epoch_loss:";
        for (double l : report.epoch_loss) out += " " + fmt_double(l);
        out += "\n";
    }
    out += std::string("frozen_intact=") + (report.freeze_ok ? "true" : "false") + "\n";
    out += "trainable_tensors=" + std::to_string(report.trainable.size()) + "\n";
    out += metrics_text({{"train_data", report.metrics}});
    if (report.has_gate) out += gate_text(report.gate);
    return out;
}

std::string run_manifest(const std::string& command_line, const RunConfig& config,
                         double wall_seconds) {
    std::string out;
    out += "command = " + command_line + "\n";
    out += std::string("version = ") + kToolVersion + "\n";
    out += "config_hash = " + std::to_string(config_hash(config)) + "\n";
    out += "wall_seconds = " + fmt_double(wall_seconds) + "\n";
    out += "\n# canonical configuration\n";
    out += echo_config(config);
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + path + "'");
    out << content;
    if (!out) throw FormatError("write failed for '" + path + "'");
}

}  // namespace moevl

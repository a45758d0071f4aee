#pragma once

#include <string>
#include <vector>

#include "moevl/config.hpp"
#include "moevl/metrics.hpp"
#include "moevl/telemetry.hpp"
#include "moevl/trainer.hpp"

namespace moevl {

// Human-readable and CSV renderings of the evaluation outputs. All numbers go
// through the shortest-round-trip formatter, "." decimal, no locale, so
// identical runs emit byte-identical reports.

std::string metrics_text(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);

std::string gate_text(const GateReport& report);
std::string gate_csv(const GateReport& report);

std::string training_text(const RunReport& report);

// What a command leaves beside its outputs: the exact invocation, tool
// version, seed, config hash, wall time, and the full canonical config, which
// together suffice to reproduce the run.
std::string run_manifest(const std::string& command_line, const RunConfig& config,
                         double wall_seconds);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace moevl

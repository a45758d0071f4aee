#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moevl/dataset.hpp"
#include "moevl/metrics.hpp"
#include "moevl/model.hpp"
#include "moevl/optimizer.hpp"
#include "moevl/telemetry.hpp"

namespace moevl {

enum class StageId { Stage1 = 1, Stage2 = 2, Stage3 = 3, Finetune = 4 };

int stage_number(StageId id);
const char* stage_name(StageId id);

enum class DataSelector { General, Emotion, Mixed };

struct StageConfig {
    StageId id = StageId::Stage1;
    int epochs = 1;
    double peak_lr = 0.01;
    int batch_size = 16;
    double warmup_ratio = 0.01;
    DataSelector selector = DataSelector::General;
    bool fec_active = false;
    // Stage 3 interpretation toggle: the embedder stays trainable by default.
    bool train_embedder = true;
    // Finetune only: which adapter set to activate and train.
    std::string adapter;
    AdamWConfig optimizer;
};

// The stage's default shape: which data it sees, what trains, whether key
// frame extraction is live. Learning rate and epochs come from the run
// config.
StageConfig stage_defaults(StageId id);

// Marks exactly the stage's trainable parameters (requires_grad on, fresh
// gradient buffers) and freezes the rest. Returns the trainable set. For the
// finetune stage, select the adapter on the model before calling.
std::vector<ParamRef> apply_stage_mask(ToyModel& model, const StageConfig& stage);

struct RunReport {
    StageId stage = StageId::Stage1;
    int epochs = 0;
    std::int64_t steps = 0;
    double first_batch_loss = 0.0;
    std::vector<double> epoch_loss;  // mean per-sample loss, one entry per epoch
    MetricsReport metrics;           // eval over the stage's data after training
    bool has_gate = false;
    GateReport gate;
    bool freeze_ok = false;
    std::vector<std::string> trainable;
};

// Runs the stage: derives shuffle and dropout streams from the seed, steps
// AdamW under the cosine schedule, then verifies every frozen parameter is
// bit-identical to its pre-stage snapshot before reporting.
RunReport train_stage(ToyModel& model, const StageConfig& stage,
                      const std::vector<SyntheticSample>& data, std::uint64_t seed);

// Eval-mode predictions (argmax logits) over the samples.
std::vector<int> predict(const ToyModel& model, const std::vector<SyntheticSample>& samples);

// Metrics over the full set plus each domain, as (name, report) pairs:
// "all", "general", "emotion". Domains without samples are omitted.
std::vector<std::pair<std::string, MetricsReport>> evaluate(
    const ToyModel& model, const std::vector<SyntheticSample>& samples);

}  // namespace moevl

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moevl/dataset.hpp"
#include "moevl/model.hpp"
#include "moevl/trainer.hpp"

namespace moevl {

// Everything a run needs, with a working default for every field. Parsed from
// a sectioned key = value file; unknown keys and sections are rejected.
struct RunConfig {
    ModelDims dims;  // [model], minus the two sample-shape fields below
    int n1 = 8;      // visual tokens per sample before merging
    int m_text = 4;  // text tokens per sample

    ProjectorKind projector = ProjectorKind::Hybrid;  // [projector]

    // [data]
    std::uint64_t data_seed = 1234;
    int data_n = 2000;
    double label_noise = 0.05;
    double emotion_fraction = 0.5;

    // [train] per-stage knobs indexed by stage_number - 1
    int stage_epochs[4] = {1, 1, 3, 5};
    double stage_lr[4] = {0.02, 0.02, 0.005, 0.005};
    int batch_size = 16;
    double warmup_ratio = 0.01;
    bool stage3_train_embedder = true;

    AdamWConfig optimizer;  // [optimizer]

    double tau = 0.9;  // [fec]

    // [lora]
    int lora_rank = 4;
    double lora_alpha = 4.0;
    double lora_dropout = 0.05;
    std::vector<std::string> adapters = {"ver", "dfew"};

    std::uint64_t seed = 42;  // [run]
};

// Parses and validates; every diagnostic names the offending key and line.
// An empty file is a valid all-defaults config.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

// Canonical text form: every key explicit, sections in fixed order, derived
// quantities (merged token count, padding, per-stage step counts) echoed as
// comments. Parsing the echo reproduces the config.
std::string echo_config(const RunConfig& config);

// Hash of the canonical echo; stamped into checkpoints so a load can tell
// whether it matches the current configuration.
std::uint64_t config_hash(const RunConfig& config);

DataParams dataset_params(const RunConfig& config);

// Stage defaults plus this config's epochs, learning rate, batch, and
// optimizer settings. The finetune adapter name is the caller's to fill.
StageConfig stage_run_config(const RunConfig& config, StageId id);

}  // namespace moevl

#include "moevl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "moevl/errors.hpp"
#include "moevl/ops.hpp"
#include "moevl/rng.hpp"

namespace moevl {

int stage_number(StageId id) { return static_cast<int>(id); }

const char* stage_name(StageId id) {
    switch (id) {
        case StageId::Stage1: return "stage1";
        case StageId::Stage2: return "stage2";
        case StageId::Stage3: return "stage3";
        case StageId::Finetune: return "finetune";
    }
    throw ConfigError("unknown stage id " + std::to_string(static_cast<int>(id)));
}

StageConfig stage_defaults(StageId id) {
    StageConfig stage;
    stage.id = id;
    switch (id) {
        case StageId::Stage1:
            stage.selector = DataSelector::General;
            break;
        case StageId::Stage2:
            stage.selector = DataSelector::Emotion;
            break;
        case StageId::Stage3:
            stage.selector = DataSelector::Mixed;
            break;
        case StageId::Finetune:
            stage.selector = DataSelector::Emotion;
            stage.fec_active = true;
            break;
        default:
            throw ConfigError("unknown stage id " + std::to_string(static_cast<int>(id)));
    }
    return stage;
}

namespace {

bool starts_with(const std::string& name, const std::string& prefix) {
    return name.rfind(prefix, 0) == 0;
}

bool param_trainable(const std::string& name, const StageConfig& stage, ProjectorKind kind,
                     const std::string& active_adapter) {
    if (starts_with(name, "lora/")) {
        return stage.id == StageId::Finetune && !active_adapter.empty() &&
               starts_with(name, "lora/" + active_adapter + "/");
    }
    switch (stage.id) {
        case StageId::Stage1:
            if (starts_with(name, "embedder/")) return true;
            if (kind == ProjectorKind::Hybrid) {
                return starts_with(name, "projector/hc/general/") ||
                       starts_with(name, "projector/hc/gate/");
            }
            return starts_with(name, "projector/");
        case StageId::Stage2:
            if (starts_with(name, "embedder/")) return true;
            if (kind == ProjectorKind::Hybrid) {
                return starts_with(name, "projector/hc/emotion/") ||
                       starts_with(name, "projector/hc/gate/");
            }
            return starts_with(name, "projector/");
        case StageId::Stage3:
            if (starts_with(name, "embedder/")) return stage.train_embedder;
            return true;
        case StageId::Finetune:
            return false;
    }
    throw ConfigError("unknown stage id " + std::to_string(static_cast<int>(stage.id)));
}

std::vector<std::size_t> select_indices(const std::vector<SyntheticSample>& data,
                                        DataSelector selector) {
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool wanted = selector == DataSelector::Mixed ||
                            (selector == DataSelector::General &&
                             data[i].domain == Domain::General) ||
                            (selector == DataSelector::Emotion &&
                             data[i].domain == Domain::Emotion);
        if (wanted) indices.push_back(i);
    }
    return indices;
}

void shuffle_indices(std::vector<std::size_t>& indices, Rng& rng) {
    for (std::size_t i = indices.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_int(static_cast<int>(i)));
        std::swap(indices[i - 1], indices[j]);
    }
}

}  // namespace

std::vector<ParamRef> apply_stage_mask(ToyModel& model, const StageConfig& stage) {
    const std::string active = model.adapters.active_name();
    std::vector<ParamRef> trainable;
    for (auto& param : parameters(model)) {
        const bool on = param_trainable(param.name, stage, model.projector.kind, active);
        param.tensor->set_requires_grad(on);
        if (on) {
            param.tensor->zero_grad();
            trainable.push_back(param);
        }
    }
    return trainable;
}

RunReport train_stage(ToyModel& model, const StageConfig& stage,
                      const std::vector<SyntheticSample>& data, std::uint64_t seed) {
    RunReport report;
    report.stage = stage.id;
    report.epochs = stage.epochs;
    if (stage.epochs < 0) throw ConfigError("negative epoch count");
    if (stage.batch_size <= 0) throw ConfigError("batch size must be positive");
    if (stage.epochs == 0) {
        report.freeze_ok = true;
        return report;
    }

    if (stage.id == StageId::Finetune) {
        if (stage.adapter.empty()) throw ConfigError("finetune needs an adapter name");
        model.adapters.select(stage.adapter);
    } else {
        model.adapters.select_none();
    }

    const auto indices = select_indices(data, stage.selector);
    if (indices.empty()) {
        throw ContractError(std::string("no ") + stage_name(stage.id) + " data to train on");
    }

    auto trainable = apply_stage_mask(model, stage);
    if (trainable.empty()) throw ContractError("stage mask left nothing trainable");
    for (const auto& p : trainable) report.trainable.push_back(p.name);

    // Snapshot everything outside the mask for the post-stage drift check.
    struct FrozenSnapshot {
        std::string name;
        const Tensor* tensor;
        std::vector<double> values;
    };
    std::vector<FrozenSnapshot> frozen;
    for (auto& param : parameters(model)) {
        if (!param.tensor->requires_grad) {
            frozen.push_back({param.name, param.tensor, param.tensor->data});
        }
    }

    const auto n = static_cast<std::int64_t>(indices.size());
    const std::int64_t batches_per_epoch = (n + stage.batch_size - 1) / stage.batch_size;
    const std::int64_t total_steps = batches_per_epoch * stage.epochs;
    const auto stage_tag = static_cast<std::uint64_t>(stage_number(stage.id));

    AdamW optimizer(stage.optimizer);
    std::int64_t step = 0;
    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        auto order = indices;
        Rng shuffle_rng(derive_seed(seed, "shuffle", stage_tag,
                                    static_cast<std::uint64_t>(epoch)));
        shuffle_indices(order, shuffle_rng);

        double epoch_loss_sum = 0.0;
        for (std::int64_t start = 0; start < n; start += stage.batch_size) {
            const auto end = std::min(n, start + stage.batch_size);
            Rng dropout_rng(derive_seed(seed, "dropout", stage_tag,
                                        static_cast<std::uint64_t>(step)));
            ForwardOptions opts{true, &dropout_rng};

            for (const auto& param : trainable) param.tensor->zero_grad();
            Tape tape;
            TapeGuard guard(tape);

            std::optional<Tensor> batch_logits;
            std::vector<int> targets;
            for (std::int64_t i = start; i < end; ++i) {
                const auto& sample = data[order[static_cast<std::size_t>(i)]];
                auto result = model_forward(model, sample.embeddings, sample.text, opts);
                batch_logits = batch_logits
                                   ? ops::concat_rows(*batch_logits, result.logits)
                                   : std::move(result.logits);
                targets.push_back(sample.label);
            }
            Tensor loss = ops::cross_entropy(*batch_logits, targets);
            if (step == 0) report.first_batch_loss = loss.item();
            epoch_loss_sum += loss.item() * static_cast<double>(end - start);

            tape.backward(loss);
            optimizer.step(trainable,
                           lr_at(step + 1, total_steps, stage.peak_lr, stage.warmup_ratio));
            ++step;
        }
        report.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(n));
    }
    report.steps = step;

    for (const auto& snapshot : frozen) {
        if (snapshot.tensor->data != snapshot.values) {
            throw ContractError("frozen parameter drift in " + snapshot.name);
        }
    }
    report.freeze_ok = true;

    std::vector<SyntheticSample> stage_data;
    for (auto i : indices) stage_data.push_back(data[i]);
    std::vector<int> labels;
    for (const auto& s : stage_data) labels.push_back(s.label);
    report.metrics =
        compute_metrics(predict(model, stage_data), labels, model.dims.n_classes);
    if (model.projector.kind == ProjectorKind::Hybrid) {
        report.has_gate = true;
        report.gate = gate_report(model, stage_data);
    }
    return report;
}

std::vector<int> predict(const ToyModel& model, const std::vector<SyntheticSample>& samples) {
    std::vector<int> predictions;
    predictions.reserve(samples.size());
    for (const auto& sample : samples) {
        auto result = model_forward(model, sample.embeddings, sample.text);
        int best = 0;
        for (int c = 1; c < result.logits.cols(); ++c) {
            if (result.logits.at(0, c) > result.logits.at(0, best)) best = c;
        }
        predictions.push_back(best);
    }
    return predictions;
}

std::vector<std::pair<std::string, MetricsReport>> evaluate(
    const ToyModel& model, const std::vector<SyntheticSample>& samples) {
    std::vector<std::pair<std::string, MetricsReport>> reports;
    auto add = [&](const std::string& name, const std::vector<SyntheticSample>& subset) {
        if (subset.empty()) return;
        std::vector<int> labels;
        for (const auto& s : subset) labels.push_back(s.label);
        reports.push_back({name, compute_metrics(predict(model, subset), labels,
                                                 model.dims.n_classes)});
    };
    add("all", samples);
    for (Domain domain : {Domain::General, Domain::Emotion}) {
        std::vector<SyntheticSample> subset;
        for (const auto& s : samples) {
            if (s.domain == domain) subset.push_back(s);
        }
        add(domain_name(domain), subset);
    }
    return reports;
}

}  // namespace moevl

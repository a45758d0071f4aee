// Acceptance suite: ten pass/fail checks over the assembled system, one line
// each. Run with --criterion N to execute a single check. Exit code is the
// number of failures.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fec_fixture.hpp"
#include "moevl/checkpoint.hpp"
#include "moevl/config.hpp"
#include "moevl/dataset.hpp"
#include "moevl/errors.hpp"
#include "moevl/grad_check.hpp"
#include "moevl/metrics.hpp"
#include "moevl/model.hpp"
#include "moevl/numfmt.hpp"
#include "moevl/ops.hpp"
#include "moevl/report.hpp"
#include "moevl/telemetry.hpp"
#include "moevl/trainer.hpp"

using namespace moevl;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt_secs(double s) {
    std::ostringstream out;
    out.precision(1);
    out << std::fixed << s << "s";
    return out.str();
}

// Mirrors the CLI's deterministic construction: backbone, then adapter sets.
ToyModel model_from_config(const RunConfig& config) {
    Rng rng(derive_seed(config.seed, "model-init"));
    ToyModel model = build_model(config.dims, config.projector, rng);
    for (const auto& name : config.adapters) {
        model.adapters.add_set(build_adapter_set(model, name, config.lora_rank,
                                                 config.lora_alpha, config.lora_dropout,
                                                 rng));
    }
    return model;
}

std::vector<RunReport> run_schedule(ToyModel& model, const RunConfig& config,
                                    const std::vector<SyntheticSample>& data) {
    std::vector<RunReport> reports;
    for (StageId id :
         {StageId::Stage1, StageId::Stage2, StageId::Stage3, StageId::Finetune}) {
        auto stage = stage_run_config(config, id);
        if (id == StageId::Finetune) stage.adapter = config.adapters.front();
        reports.push_back(train_stage(model, stage, data, config.seed));
    }
    return reports;
}

Outcome criterion_1_gradients() {
    const auto start = std::chrono::steady_clock::now();
    const auto report = standard_grad_checks(20);
    const double elapsed = seconds_since(start);
    const double worst = report.max_rel_err();
    Outcome out;
    out.pass = worst < 1e-4 && elapsed < 120.0;
    out.detail = "max rel err " + fmt_double(worst) + " over " +
                 std::to_string(report.entries.size()) + " blocks (worst " +
                 report.worst() + "), " + fmt_secs(elapsed);
    return out;
}

Outcome criterion_2_convexity() {
    const auto start = std::chrono::steady_clock::now();
    const double tol = 1e-12;
    double worst_pair = 0.0;
    double worst_escape = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        Rng rng(derive_seed(2024, "convexity", static_cast<std::uint64_t>(trial)));
        const int d_v = 3 + static_cast<int>(rng.next_int(5));
        const int k = 1 + static_cast<int>(rng.next_int(3));
        const int n1 = 2 + static_cast<int>(rng.next_int(5));
        const int d_h = 3 + static_cast<int>(rng.next_int(4));
        const int d_t = 3 + static_cast<int>(rng.next_int(4));
        auto projector = make_projector(ProjectorKind::Hybrid, d_v, k, d_h, d_t, rng);
        auto& hc = std::get<HybridCompressor>(projector.params);
        hc.gate.w_gate = Tensor::uniform({k * d_v, 2}, rng, -1.0, 1.0);
        hc.gate.b_gate = Tensor::uniform({2}, rng, -0.5, 0.5);
        hc.emotion = make_expert(k * d_v, d_h, d_t, rng);

        VisualEmbeddings e(Tensor::uniform({n1, d_v}, rng, -2.0, 2.0));
        const Tensor merged = token_merge(e, k);
        const Tensor emotion = expert_forward(merged, hc.emotion);
        const Tensor general = expert_forward(merged, hc.general);
        const Tensor gate = gate_forward(merged, hc.gate);
        const VisualTokens tokens = hybrid_compress(e, hc, k);

        for (int i = 0; i < merged.rows(); ++i) {
            const double g = gate.at(i, 0);
            worst_pair = std::max(worst_pair, std::fabs(g + (1.0 - g) - 1.0));
            if (g < 0.0 || g > 1.0) worst_pair = 1.0;
            worst_pair = std::max(worst_pair, std::fabs(tokens.gate_trace[i] - g));
            for (int j = 0; j < d_t; ++j) {
                const double lo = std::min(emotion.at(i, j), general.at(i, j));
                const double hi = std::max(emotion.at(i, j), general.at(i, j));
                const double v = tokens.values.at(i, j);
                worst_escape = std::max({worst_escape, lo - v, v - hi});
            }
        }
    }
    const double elapsed = seconds_since(start);
    Outcome out;
    out.pass = worst_pair <= tol && worst_escape <= tol && elapsed < 10.0;
    out.detail = "1000 draws: pair-sum dev " + fmt_double(worst_pair) +
                 ", interval escape " + fmt_double(std::max(worst_escape, 0.0)) + ", " +
                 fmt_secs(elapsed);
    return out;
}

Outcome criterion_3_routing() {
    const auto start = std::chrono::steady_clock::now();
    RunConfig config;  // defaults: n = 2000, fixed seeds
    auto model = model_from_config(config);
    const auto data = generate_dataset(dataset_params(config));

    const GateReport before = gate_report(model, data);
    const bool balanced_start = std::fabs(before.emotion.emotion_weight - 0.5) < 0.05 &&
                                std::fabs(before.general.general_weight - 0.5) < 0.05;

    run_schedule(model, config, data);
    const GateReport after = gate_report(model, data);
    const double elapsed = seconds_since(start);

    Outcome out;
    out.pass = balanced_start && after.emotion.emotion_weight > 0.55 &&
               after.general.general_weight > 0.55 && elapsed < 600.0;
    out.detail = "start e/g " + fmt_double(before.emotion.emotion_weight) + "/" +
                 fmt_double(before.general.general_weight) + ", after emotion->emotion " +
                 fmt_double(after.emotion.emotion_weight) + ", general->general " +
                 fmt_double(after.general.general_weight) + ", " + fmt_secs(elapsed);
    return out;
}

Outcome criterion_4_freeze() {
    RunConfig config;
    config.data_n = 200;
    config.stage_epochs[0] = 1;
    config.stage_epochs[1] = 1;
    config.stage_epochs[2] = 1;
    config.stage_epochs[3] = 1;
    auto model = model_from_config(config);
    const auto data = generate_dataset(dataset_params(config));

    int checked = 0;
    for (StageId id :
         {StageId::Stage1, StageId::Stage2, StageId::Stage3, StageId::Finetune}) {
        auto stage = stage_run_config(config, id);
        if (id == StageId::Finetune) stage.adapter = config.adapters.front();

        std::vector<std::pair<std::string, std::vector<double>>> snapshot;
        for (const auto& p : parameters(model)) snapshot.push_back({p.name, p.tensor->data});

        const auto report = train_stage(model, stage, data, config.seed);
        if (!report.freeze_ok) {
            return {false, std::string(stage_name(id)) + " reported frozen drift"};
        }

        const std::set<std::string> trainable(report.trainable.begin(),
                                              report.trainable.end());
        auto params = parameters(model);
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (trainable.count(params[i].name)) continue;
            if (params[i].tensor->data != snapshot[i].second) {
                return {false, std::string(stage_name(id)) + " modified frozen parameter " +
                                   params[i].name};
            }
            ++checked;
        }
    }
    return {true, "frozen tensors bit-identical across all four stages (" +
                      std::to_string(checked) + " tensor checks)"};
}

Outcome criterion_5_lora() {
    // Fresh adapters change nothing.
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(derive_seed(5001, "noop", static_cast<std::uint64_t>(seed)));
        Tensor w = Tensor::uniform({5, 4}, rng, -1.0, 1.0);
        Tensor x = Tensor::uniform({3, 5}, rng, -1.0, 1.0);
        auto adapter = make_adapter("fresh", "w", 5, 4, 2, 8.0, 0.0, rng);
        Rng inert(0);
        const Tensor with = lora_forward(x, w, adapter, false, inert);
        const Tensor without = ops::matmul(x, w);
        if (with.data != without.data) return {false, "fresh adapter is not an exact no-op"};
    }

    // Merged weights match the live adapter path.
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(5002, "merge", static_cast<std::uint64_t>(trial)));
        const int d_in = 2 + static_cast<int>(rng.next_int(6));
        const int d_out = 2 + static_cast<int>(rng.next_int(6));
        const int rank = 1 + static_cast<int>(rng.next_int(std::min(d_in, d_out)));
        Tensor w = Tensor::uniform({d_in, d_out}, rng, -1.0, 1.0);
        auto adapter = make_adapter("m", "w", d_in, d_out, rank, 2.0 * rank, 0.0, rng);
        adapter.a = Tensor::uniform({rank, d_in}, rng, -1.0, 1.0);
        adapter.b = Tensor::uniform({d_out, rank}, rng, -1.0, 1.0);
        Tensor x = Tensor::uniform({4, d_in}, rng, -1.0, 1.0);

        Rng inert(0);
        const Tensor live = lora_forward(x, w, adapter, false, inert);
        const Tensor merged = ops::matmul(x, lora_merge("w", w, adapter));
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < live.data.size(); ++i) {
            num += (live.data[i] - merged.data[i]) * (live.data[i] - merged.data[i]);
            den += live.data[i] * live.data[i];
        }
        worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-300));
    }
    if (worst >= 1e-12) {
        return {false, "merge equivalence drifted to rel " + fmt_double(worst)};
    }

    // Training one named adapter leaves the other set and the base untouched.
    RunConfig config;
    config.data_n = 64;
    config.stage_epochs[3] = 1;
    auto model = model_from_config(config);
    const auto data = generate_dataset(dataset_params(config));

    std::vector<std::pair<std::string, std::vector<double>>> snapshot;
    for (const auto& p : parameters(model)) snapshot.push_back({p.name, p.tensor->data});

    auto stage = stage_run_config(config, StageId::Finetune);
    stage.adapter = "ver";
    train_stage(model, stage, data, config.seed);

    bool ver_moved = false;
    auto params = parameters(model);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const bool is_ver = params[i].name.rfind("lora/ver/", 0) == 0;
        const bool same = params[i].tensor->data == snapshot[i].second;
        if (is_ver) {
            ver_moved = ver_moved || !same;
        } else if (!same) {
            return {false, "finetune moved non-target parameter " + params[i].name};
        }
    }
    if (!ver_moved) return {false, "finetune did not update the selected adapter"};
    return {true, "no-op exactness, 100-case merge equivalence < 1e-12, adapter isolation"};
}

Outcome criterion_6_param_structure() {
    Rng rng(6001);
    const int d_v = 16, k = 4, d_h = 32, d_t = 32;
    auto mlp = make_projector(ProjectorKind::Mlp, d_v, k, d_h, d_t, rng);
    auto fusion = make_projector(ProjectorKind::Fusion, d_v, k, d_h, d_t, rng);
    auto hybrid = make_projector(ProjectorKind::Hybrid, d_v, k, d_h, d_t, rng);

    const std::size_t mlp_n = param_count(mlp);
    const std::size_t fusion_n = param_count(fusion);
    const std::size_t hybrid_n = param_count(hybrid);
    const std::size_t core = fusion_core_param_count(std::get<FusionProjector>(fusion.params));

    Outcome out;
    out.pass = core == 2 * mlp_n && hybrid_n > fusion_n;
    out.detail = "mlp " + std::to_string(mlp_n) + ", fusion core " + std::to_string(core) +
                 " (total " + std::to_string(fusion_n) + "), hybrid " +
                 std::to_string(hybrid_n);
    return out;
}

Outcome criterion_7_fec() {
    const auto frames = fixture::frames();
    const auto observations = fixture::observations();
    const ScriptedScorer scorer = fixture::scorer();

    // Brute-force expectation: a frame qualifies when any face clears tau.
    auto expected_frames = [&](double tau) {
        std::set<int> hits;
        for (const auto& [frame, faces] : observations) {
            for (const auto& face : faces) {
                if (max_confidence(face) >= tau) hits.insert(frame);
            }
        }
        return hits;
    };
    auto selected_frames = [&](double tau) {
        std::set<int> hits;
        for (const auto& hit : select_key_frames(frames, scorer, tau)) {
            hits.insert(hit.frame_index);
        }
        return hits;
    };

    for (double tau : {0.05, 0.3, 0.5, 0.55, 0.65, 0.7, 0.75, 0.9, 0.92, 0.95, 1.0}) {
        if (selected_frames(tau) != expected_frames(tau)) {
            return {false, "selection diverged from enumeration at tau " + fmt_double(tau)};
        }
    }

    const auto tight = selected_frames(0.9);
    const auto middle = selected_frames(0.7);
    const auto loose = selected_frames(0.5);
    const bool nested = std::includes(middle.begin(), middle.end(), tight.begin(),
                                      tight.end()) &&
                        std::includes(loose.begin(), loose.end(), middle.begin(),
                                      middle.end());
    if (!nested) return {false, "threshold monotonicity violated across {0.5, 0.7, 0.9}"};

    const auto result = run_fec(frames, scorer, 0.7);
    if (result.sequence.original_count != frames.size()) {
        return {false, "composed sequence lost original frames"};
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& kept = result.sequence.frames[i];
        if (kept.pixels.data != frames[i].pixels.data ||
            kept.timestamp != frames[i].timestamp || kept.index != frames[i].index) {
            return {false, "original frame " + std::to_string(i) + " changed"};
        }
    }
    return {true, "selection == enumeration on 11 thresholds, nesting holds, originals "
                  "bit-identical"};
}

Outcome criterion_8_metrics() {
    const std::vector<int> labels = {0, 0, 0, 0, 1, 1};
    const std::vector<int> preds = {0, 0, 0, 1, 1, 0};
    const auto hand = compute_metrics(preds, labels, 2);
    if (std::fabs(hand.uar - 0.625) > 1e-12 || std::fabs(hand.war - 4.0 / 6.0) > 1e-12) {
        return {false, "hand case gave war " + fmt_double(hand.war) + ", uar " +
                           fmt_double(hand.uar)};
    }

    for (int trial = 0; trial < 1000; ++trial) {
        Rng rng(derive_seed(8001, "tally", static_cast<std::uint64_t>(trial)));
        const int n_classes = 2 + static_cast<int>(rng.next_int(5));
        const int n = 1 + static_cast<int>(rng.next_int(60));
        std::vector<int> ls(static_cast<std::size_t>(n)), ps(static_cast<std::size_t>(n));
        for (auto& l : ls) l = static_cast<int>(rng.next_int(n_classes));
        for (auto& p : ps) p = static_cast<int>(rng.next_int(n_classes));
        const auto got = compute_metrics(ps, ls, n_classes);

        std::vector<std::int64_t> confusion(
            static_cast<std::size_t>(n_classes) * n_classes, 0);
        for (int i = 0; i < n; ++i) {
            confusion[static_cast<std::size_t>(ls[i]) * n_classes + ps[i]] += 1;
        }
        if (confusion != got.confusion) return {false, "confusion mismatch"};

        std::int64_t diag = 0;
        double recall_sum = 0.0;
        int present = 0;
        for (int c = 0; c < n_classes; ++c) {
            std::int64_t row = 0;
            for (int p = 0; p < n_classes; ++p) {
                row += confusion[static_cast<std::size_t>(c) * n_classes + p];
            }
            const std::int64_t hit = confusion[static_cast<std::size_t>(c) * n_classes + c];
            diag += hit;
            const double recall = got.per_class_recall[static_cast<std::size_t>(c)];
            if (row == 0) {
                if (!std::isnan(recall)) return {false, "absent class missing nan recall"};
            } else {
                if (recall != static_cast<double>(hit) / static_cast<double>(row)) {
                    return {false, "recall mismatch"};
                }
                recall_sum += recall;
                ++present;
            }
        }
        if (got.war != static_cast<double>(diag) / n) return {false, "war mismatch"};
        if (std::fabs(got.uar - recall_sum / present) > 1e-15) {
            return {false, "uar mismatch"};
        }
    }
    return {true, "hand case exact to 1e-12; 1000 random instances match the tally"};
}

Outcome criterion_9_determinism() {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("moevl_accept_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    auto path = [&dir](const char* name) { return (dir / name).string(); };
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), {});
    };

    RunConfig config;
    config.data_n = 64;
    const auto data = generate_dataset(dataset_params(config));

    auto run_once = [&](const char* out_name) {
        auto model = model_from_config(config);
        auto stage = stage_run_config(config, StageId::Stage1);
        const auto report = train_stage(model, stage, data, config.seed);
        CheckpointManifest manifest;
        manifest.config_hash = config_hash(config);
        manifest.provenance = "acceptance stage1";
        save_checkpoint(model, manifest, path(out_name));
        return training_text(report);
    };
    const std::string report_a = run_once("a.eqck");
    const std::string report_b = run_once("b.eqck");

    Outcome out;
    if (report_a != report_b) {
        out.detail = "reports differ between identical runs";
        std::filesystem::remove_all(dir);
        return out;
    }
    if (slurp(path("a.eqck")) != slurp(path("b.eqck"))) {
        out.detail = "checkpoints differ between identical runs";
        std::filesystem::remove_all(dir);
        return out;
    }

    // Round trip: reload and re-save; bytes must hold through the 32-bit form.
    auto model = model_from_config(config);
    load_checkpoint(model, path("a.eqck"));
    CheckpointManifest manifest;
    manifest.config_hash = config_hash(config);
    manifest.provenance = "acceptance stage1";
    save_checkpoint(model, manifest, path("c.eqck"));
    const bool round_trip = slurp(path("a.eqck")) == slurp(path("c.eqck"));
    std::filesystem::remove_all(dir);

    out.pass = round_trip;
    out.detail = round_trip
                     ? "reports and checkpoints byte-identical; reload round trip exact"
                     : "round-tripped checkpoint bytes differ";
    return out;
}

Outcome criterion_10_schedule() {
    const double peak = 0.02;
    struct Point {
        std::int64_t step;
        double expect;
    };
    // total 1000, warmup 10: decay spans (10, 1000], midpoint at 505.
    const Point points[] = {{0, 0.0}, {10, peak}, {1000, 0.0}, {505, 0.5 * peak}};
    double worst = 0.0;
    for (const auto& p : points) {
        worst = std::max(worst, std::fabs(lr_at(p.step, 1000, peak, 0.01) - p.expect));
    }
    Outcome out;
    out.pass = worst <= 1e-12;
    out.detail = "endpoint and midpoint deviations <= " + fmt_double(worst);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc == 3 && std::strcmp(argv[1], "--criterion") == 0) {
        only = std::atoi(argv[2]);
    } else if (argc != 1) {
        std::cerr << "usage: acceptance [--criterion N]\n";
        return 2;
    }

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"gradient correctness", criterion_1_gradients},
        {"gate convexity and normalization", criterion_2_convexity},
        {"routing specialization", criterion_3_routing},
        {"stage freeze integrity", criterion_4_freeze},
        {"adapter algebra", criterion_5_lora},
        {"projector parameter structure", criterion_6_param_structure},
        {"key-frame pipeline", criterion_7_fec},
        {"metrics oracle", criterion_8_metrics},
        {"determinism and persistence", criterion_9_determinism},
        {"learning-rate schedule", criterion_10_schedule},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i) + 1;
        if (only != 0 && number != only) continue;
        Outcome outcome;
        try {
            outcome = criteria[i].second();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        std::cout << "criterion " << number << " (" << criteria[i].first << "): "
                  << (outcome.pass ? "PASS" : "FAIL") << " - " << outcome.detail << "\n";
        failures += outcome.pass ? 0 : 1;
    }
    return failures;
}

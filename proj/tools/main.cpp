#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "moevl/checkpoint.hpp"
#include "moevl/config.hpp"
#include "moevl/dataset.hpp"
#include "moevl/errors.hpp"
#include "moevl/fec.hpp"
#include "moevl/fec_io.hpp"
#include "moevl/grad_check.hpp"
#include "moevl/model.hpp"
#include "moevl/numfmt.hpp"
#include "moevl/report.hpp"
#include "moevl/telemetry.hpp"
#include "moevl/trainer.hpp"

namespace {

using namespace moevl;

struct Invocation {
    std::string command_line;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    double wall_seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

RunConfig load_config(const std::string& path) {
    return path.empty() ? RunConfig{} : parse_config(path);
}

// Model construction is one deterministic draw stream: backbone first, then
// each configured adapter set in order.
ToyModel build_from_config(const RunConfig& config) {
    Rng rng(derive_seed(config.seed, "model-init"));
    ToyModel model = build_model(config.dims, config.projector, rng);
    for (const auto& name : config.adapters) {
        model.adapters.add_set(build_adapter_set(model, name, config.lora_rank,
                                                 config.lora_alpha, config.lora_dropout,
                                                 rng));
    }
    return model;
}

void check_hash(const CheckpointManifest& manifest, const RunConfig& config,
                const std::string& path) {
    if (manifest.config_hash != config_hash(config)) {
        throw ConfigError("checkpoint '" + path +
                          "' was written under a different configuration (hash " +
                          std::to_string(manifest.config_hash) + ", current " +
                          std::to_string(config_hash(config)) + ")");
    }
}

std::vector<SyntheticSample> load_or_generate(const RunConfig& config,
                                              const std::string& data_path) {
    if (data_path.empty()) return generate_dataset(dataset_params(config));

    DataParams on_disk;
    auto samples = load_dataset(data_path, &on_disk);
    const DataParams expected = dataset_params(config);
    if (on_disk.n1 != expected.n1 || on_disk.d_v != expected.d_v ||
        on_disk.vocab != expected.vocab || on_disk.n_classes != expected.n_classes ||
        on_disk.m_text != expected.m_text) {
        throw ConfigError("dataset '" + data_path +
                          "' does not match the model configuration");
    }
    return samples;
}

void write_manifest(const std::string& path, const Invocation& run,
                    const RunConfig& config) {
    write_text_file(path, run_manifest(run.command_line, config, run.wall_seconds()));
}

int cmd_gen_data(const Invocation& run, const std::string& config_path,
                 const std::string& out) {
    const RunConfig config = load_config(config_path);
    const auto params = dataset_params(config);
    const auto samples = generate_dataset(params);
    save_dataset(out, params, samples);

    long emotion = 0;
    for (const auto& s : samples) emotion += s.domain == Domain::Emotion;
    std::cout << "wrote " << samples.size() << " samples (" << samples.size() - emotion
              << " general, " << emotion << " emotion) to " << out << "\n";
    std::cout << "probe ceiling: " << fmt_double(probe_accuracy(samples, params.n_classes))
              << "\n";
    write_manifest(out + ".manifest.txt", run, config);
    return 0;
}

int run_training(const Invocation& run, const RunConfig& config, StageId id,
                 const std::string& adapter, const std::string& data_path,
                 const std::string& init_path, const std::string& out) {
    ToyModel model = build_from_config(config);
    if (!init_path.empty()) check_hash(load_checkpoint(model, init_path), config, init_path);

    auto stage = stage_run_config(config, id);
    stage.adapter = adapter;
    const auto data = load_or_generate(config, data_path);
    const auto report = train_stage(model, stage, data, config.seed);

    const std::string text = training_text(report);
    std::cout << text;
    write_text_file(out + ".report.txt", text);

    CheckpointManifest manifest;
    manifest.config_hash = config_hash(config);
    manifest.provenance = std::string(stage_name(id)) +
                          (adapter.empty() ? "" : " adapter " + adapter) +
                          (init_path.empty() ? " from scratch" : " from " + init_path);
    save_checkpoint(model, manifest, out);
    std::cout << "checkpoint: " << out << "\n";
    write_manifest(out + ".manifest.txt", run, config);
    return 0;
}

int cmd_eval(const Invocation& run, const std::string& config_path,
             const std::string& ckpt, const std::string& data_path,
             const std::string& csv) {
    const RunConfig config = load_config(config_path);
    ToyModel model = build_from_config(config);
    check_hash(load_checkpoint(model, ckpt), config, ckpt);

    const auto data = load_or_generate(config, data_path);
    const auto rows = evaluate(model, data);
    std::cout << metrics_text(rows);
    if (!csv.empty()) write_text_file(csv, metrics_csv(rows));
    write_manifest((csv.empty() ? std::string("eval") : csv) + ".manifest.txt", run, config);
    return 0;
}

int cmd_gate_report(const Invocation& run, const std::string& config_path,
                    const std::string& ckpt, const std::string& data_path,
                    const std::string& csv) {
    const RunConfig config = load_config(config_path);
    ToyModel model = build_from_config(config);
    if (!ckpt.empty()) check_hash(load_checkpoint(model, ckpt), config, ckpt);

    const auto data = load_or_generate(config, data_path);
    const auto report = gate_report(model, data);
    std::cout << gate_text(report);
    if (!csv.empty()) write_text_file(csv, gate_csv(report));
    write_manifest((csv.empty() ? std::string("gate-report") : csv) + ".manifest.txt", run,
                   config);
    return 0;
}

int cmd_grad_check(const Invocation& run, const std::string& config_path, int seeds) {
    const RunConfig config = load_config(config_path);
    const auto report = standard_grad_checks(seeds);
    std::cout << "checked " << report.entries.size() << " blocks over " << seeds
              << " seeds\n";
    std::cout << "max relative error: " << fmt_double(report.max_rel_err()) << " (worst: "
              << report.worst() << ")\n";
    write_manifest("grad-check.manifest.txt", run, config);
    if (report.max_rel_err() > 1e-4) {
        std::cerr << "error: numeric: gradient check exceeded 1e-4 at " << report.worst()
                  << "\n";
        return 1;
    }
    return 0;
}

int cmd_fec_extract(const Invocation& run, const std::string& config_path,
                    const std::string& frames_dir, const std::string& observations_path,
                    double tau_override, const std::string& out_dir) {
    RunConfig config = load_config(config_path);
    if (tau_override >= 0.0) {
        if (!(tau_override > 0.0 && tau_override <= 1.0)) {
            throw ConfigError("tau must lie in (0, 1], got " + fmt_double(tau_override));
        }
        config.tau = tau_override;
    }

    const auto frames = read_frame_dir(frames_dir);
    ScriptedScorer scorer(read_observations(observations_path));
    const auto result = run_fec(frames, scorer, config.tau);

    std::filesystem::create_directories(out_dir);
    write_frame_dir(out_dir, result.sequence.frames);
    const std::string report_path =
        (std::filesystem::path(out_dir) / "selection.txt").string();
    write_selection_report(report_path, result, config.tau);

    std::cout << "selected " << result.selected.size() << " key faces; wrote "
              << result.sequence.frames.size() << " frames ("
              << result.sequence.original_count << " original) to " << out_dir << "\n";
    write_manifest((std::filesystem::path(out_dir) / "manifest.txt").string(), run, config);
    return 0;
}

int cmd_inspect(const Invocation& run, const std::string& path) {
    const auto contents = read_checkpoint(path);
    std::cout << "checkpoint: " << path << "\n";
    std::cout << "provenance: " << contents.manifest.provenance << "\n";
    std::cout << "config_hash: " << contents.manifest.config_hash << "\n";
    std::cout << "tensors: " << contents.tensors.size() << "\n";

    std::size_t total = 0;
    for (const auto& t : contents.tensors) {
        // Checksum over the stored 32-bit form, so it matches the file bytes.
        std::vector<float> narrowed(t.values.size());
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            narrowed[i] = static_cast<float>(t.values[i]);
        }
        const std::uint64_t sum =
            fnv1a(narrowed.data(), narrowed.size() * sizeof(float));
        std::cout << "  " << t.name << " " << shape_str(t.shape) << " fnv1a=" << std::hex
                  << sum << std::dec << "\n";
        total += t.values.size();
    }
    std::cout << "total values: " << total << "\n";

    std::string manifest;
    manifest += "command = " + run.command_line + "\n";
    manifest += "version = 0.1.0\n";
    manifest += "checkpoint = " + path + "\n";
    manifest += "wall_seconds = " + fmt_double(run.wall_seconds()) + "\n";
    write_text_file("inspect.manifest.txt", manifest);
    return 0;
}

std::string join_args(int argc, char** argv) {
    std::string joined;
    for (int i = 0; i < argc; ++i) {
        if (i) joined += " ";
        joined += argv[i];
    }
    return joined;
}

}  // namespace

int main(int argc, char** argv) {
    Invocation run;
    run.command_line = join_args(argc, argv);

    CLI::App app{"toy emotion-aware vision-language pipeline"};
    app.require_subcommand(1);

    std::string config_path, data_path, init_path, ckpt_path, csv_path, adapter;
    std::string out_path, frames_dir, observations_path;
    int stage = 1;
    int seeds = 20;
    double tau_override = -1.0;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    gen->add_option("--config", config_path, "run configuration file");
    gen->add_option("--out", out_path, "output dataset path")->default_val("data.eqds");

    auto* train = app.add_subcommand("train", "run one pre-training stage");
    train->add_option("--stage", stage, "stage number")->required()->check(CLI::Range(1, 3));
    train->add_option("--config", config_path, "run configuration file");
    train->add_option("--data", data_path, "dataset file (generated on the fly if absent)");
    train->add_option("--init", init_path, "checkpoint to start from");
    train->add_option("--out", out_path, "output checkpoint path");

    auto* finetune = app.add_subcommand("finetune", "adapter finetuning stage");
    finetune->add_option("--adapter", adapter, "adapter set to train")->required();
    finetune->add_option("--config", config_path, "run configuration file");
    finetune->add_option("--data", data_path, "dataset file (generated on the fly if absent)");
    finetune->add_option("--init", init_path, "checkpoint to start from");
    finetune->add_option("--out", out_path, "output checkpoint path");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--config", config_path, "run configuration file");
    eval->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
    eval->add_option("--data", data_path, "dataset file (generated on the fly if absent)");
    eval->add_option("--csv", csv_path, "also write metrics as CSV");

    auto* gate = app.add_subcommand("gate-report", "routing telemetry by domain");
    gate->add_option("--config", config_path, "run configuration file");
    gate->add_option("--ckpt", ckpt_path, "checkpoint to load (fresh model if absent)");
    gate->add_option("--data", data_path, "dataset file (generated on the fly if absent)");
    gate->add_option("--csv", csv_path, "also write the report as CSV");

    auto* grad = app.add_subcommand("grad-check", "finite-difference gradient sweep");
    grad->add_option("--config", config_path, "run configuration file");
    grad->add_option("--seeds", seeds, "randomized instances per block")
        ->check(CLI::PositiveNumber);

    auto* fec = app.add_subcommand("fec-extract", "key-frame selection and composition");
    fec->add_option("--config", config_path, "run configuration file");
    fec->add_option("--frames", frames_dir, "input frame directory")->required();
    fec->add_option("--observations", observations_path, "face observation file")
        ->required();
    fec->add_option("--tau", tau_override, "confidence threshold override");
    fec->add_option("--out", out_path, "output directory")->required();

    auto* inspect = app.add_subcommand("inspect", "list a checkpoint's tensors");
    inspect->add_option("checkpoint", ckpt_path, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(run, config_path, out_path);
        if (train->parsed()) {
            if (out_path.empty()) out_path = "stage" + std::to_string(stage) + ".eqck";
            return run_training(run, load_config(config_path),
                                static_cast<StageId>(stage), "", data_path, init_path,
                                out_path);
        }
        if (finetune->parsed()) {
            if (out_path.empty()) out_path = "finetune_" + adapter + ".eqck";
            return run_training(run, load_config(config_path), StageId::Finetune, adapter,
                                data_path, init_path, out_path);
        }
        if (eval->parsed()) return cmd_eval(run, config_path, ckpt_path, data_path, csv_path);
        if (gate->parsed()) {
            return cmd_gate_report(run, config_path, ckpt_path, data_path, csv_path);
        }
        if (grad->parsed()) return cmd_grad_check(run, config_path, seeds);
        if (fec->parsed()) {
            return cmd_fec_extract(run, config_path, frames_dir, observations_path,
                                   tau_override, out_path);
        }
        if (inspect->parsed()) return cmd_inspect(run, ckpt_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

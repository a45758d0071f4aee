#include "moevl/grad_check.hpp"
#include "moevl/compressor.hpp"
#include "moevl/lora.hpp"
#include "moevl/model.hpp"
#include "moevl/ops.hpp"

#include <algorithm>
#include <cmath>

namespace moevl {

double GradCheckReport::max_rel_err() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
    return worst;
}

std::string GradCheckReport::worst() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries)
        if (!w || e.max_rel_err > w->max_rel_err) w = &e;
    return w ? w->name : "";
}

Tensor tether_loss(const Tensor& base,
                   const std::vector<std::pair<std::string, Tensor*>>& params,
                   std::uint64_t seed) {
    Tensor total = base;
    Rng rng(seed);
    for (const auto& [name, t] : params) {
        Tensor probe = Tensor::zeros(t->shape);
        for (double& v : probe.data) {
            double sign = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
            v = sign * rng.next_uniform(0.05, 0.15);
        }
        total = ops::add(total, ops::sum(ops::mul(*t, probe)));
    }
    return total;
}

GradCheckReport finite_diff_check(
    const std::function<Tensor()>& loss_fn,
    const std::vector<std::pair<std::string, Tensor*>>& params, double eps) {
    if (eps < 1e-8 || eps > 1e-4) {
        throw ConfigError("finite_diff_check: eps must be in [1e-8, 1e-4], got " +
                          std::to_string(eps));
    }

    for (const auto& [name, t] : params) {
        t->set_requires_grad(true);
        t->zero_grad();
    }

    Tape tape;
    {
        TapeGuard guard(tape);
        Tensor loss = loss_fn();
        if (!std::isfinite(loss.item())) {
            throw NumericError("finite_diff_check: loss is not finite");
        }
        tape.backward(loss);
    }

    auto eval = [&loss_fn]() {
        double v = loss_fn().item();
        if (!std::isfinite(v)) {
            throw NumericError("finite_diff_check: perturbed loss is not finite");
        }
        return v;
    };

    GradCheckReport report;
    for (const auto& [name, t] : params) {
        const std::vector<double>& analytic = t->grad();
        GradCheckEntry entry{name, 0.0};
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            const double saved = t->data[i];
            t->data[i] = saved + eps;
            double up = eval();
            t->data[i] = saved - eps;
            double down = eval();
            t->data[i] = saved;

            double numeric = (up - down) / (2.0 * eps);
            double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err,
                                         std::fabs(analytic[i] - numeric) / denom);
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

namespace {

using Params = std::vector<std::pair<std::string, Tensor*>>;

// One entry per (seed, block): the block's worst coordinate.
void check_block(GradCheckReport& report, const std::string& label, std::uint64_t seed,
                 const std::function<Tensor()>& loss_fn, const Params& params) {
    auto tethered = [&]() { return tether_loss(loss_fn(), params, seed); };
    auto sub = finite_diff_check(tethered, params);
    report.entries.push_back({label, sub.max_rel_err()});
}

void visit_projector_params(Projector& projector, Params& out) {
    visit_params(projector, "projector",
                 [&](const std::string& name, Tensor& t) { out.push_back({name, &t}); });
}

void check_primitive_ops(GradCheckReport& report, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "ops"));
    Tensor a = Tensor::uniform({3, 4}, rng, -1.0, 1.0);
    Tensor b = Tensor::uniform({4, 3}, rng, -1.0, 1.0);
    Tensor gamma = Tensor::uniform({4}, rng, 0.5, 1.5);
    Tensor beta = Tensor::uniform({4}, rng, -0.5, 0.5);
    Params params = {{"a", &a}, {"b", &b}, {"gamma", &gamma}, {"beta", &beta}};
    auto loss = [&]() {
        Tensor h = ops::gelu(ops::matmul(a, b));
        Tensor n = ops::layer_norm(ops::matmul(h, ops::transpose(b)), gamma, beta);
        Tensor s = ops::softmax(n, 1);
        return ops::sum(ops::mul(s, ops::relu(n)));
    };
    check_block(report, "ops", seed, loss, params);
}

void check_expert(GradCheckReport& report, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "expert"));
    const int d_in = 4 + static_cast<int>(rng.next_int(3));
    auto expert = make_expert(d_in, 5, 4, rng);
    Tensor x = Tensor::uniform({3, d_in}, rng, -1.0, 1.0);
    Params params = {{"x", &x},
                     {"w1", &expert.w1},
                     {"b1", &expert.b1},
                     {"w2", &expert.w2},
                     {"b2", &expert.b2},
                     {"ln_gamma", &expert.ln_gamma},
                     {"ln_beta", &expert.ln_beta}};
    auto loss = [&]() { return ops::sum(expert_forward(x, expert)); };
    check_block(report, "expert", seed, loss, params);
}

void check_gate(GradCheckReport& report, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "gate"));
    const int d = 4 + static_cast<int>(rng.next_int(3));
    auto gate = make_gate(d, rng);
    // The logit head initializes to zero, which would cut gradient flow to
    // the attention projections; perturb it so every parameter is exercised.
    gate.w_gate = Tensor::uniform({d, 2}, rng, -0.5, 0.5);
    Tensor x = Tensor::uniform({3, d}, rng, -1.0, 1.0);
    Params params = {{"x", &x},       {"wq", &gate.wq},         {"wk", &gate.wk},
                     {"wv", &gate.wv}, {"w_gate", &gate.w_gate}, {"b_gate", &gate.b_gate}};
    auto loss = [&]() { return ops::sum(gate_forward(x, gate)); };
    check_block(report, "gate", seed, loss, params);
}

void check_projector(GradCheckReport& report, ProjectorKind kind, std::uint64_t seed) {
    Rng rng(derive_seed(seed, projector_kind_name(kind)));
    const int d_v = 3 + static_cast<int>(rng.next_int(3));
    const int k = 2;
    const int n1 = 4;
    auto projector = make_projector(kind, d_v, k, 5, 4, rng);
    if (auto* hc = std::get_if<HybridCompressor>(&projector.params)) {
        hc->gate.w_gate = Tensor::uniform({k * d_v, 2}, rng, -0.5, 0.5);
        // The experts start as copies, which makes the blend independent of
        // the gate; redraw one so the gate parameters carry gradient.
        hc->emotion = make_expert(k * d_v, 5, 4, rng);
    }
    Tensor x = Tensor::uniform({n1, d_v}, rng, -1.0, 1.0);
    Params params = {{"x", &x}};
    visit_projector_params(projector, params);
    auto loss = [&]() {
        return ops::sum(projector_forward(projector, VisualEmbeddings(x)).values);
    };
    check_block(report, std::string("projector/") + projector_kind_name(kind), seed, loss,
                params);
}

void check_adapter_path(GradCheckReport& report, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "adapter"));
    const int d_in = 4;
    const int d_out = 5;
    Tensor base = Tensor::uniform({d_in, d_out}, rng, -1.0, 1.0);
    auto adapter = make_adapter("probe", "w", d_in, d_out, 2, 2.0, 0.0, rng);
    adapter.a = Tensor::uniform({2, d_in}, rng, -1.0, 1.0);
    adapter.b = Tensor::uniform({d_out, 2}, rng, -1.0, 1.0);
    Tensor x = Tensor::uniform({3, d_in}, rng, -1.0, 1.0);
    Params params = {{"x", &x}, {"w", &base}, {"A", &adapter.a}, {"B", &adapter.b}};
    Rng inert(0);
    auto loss = [&]() {
        return ops::sum(ops::gelu(lora_forward(x, base, adapter, false, inert)));
    };
    check_block(report, "adapter", seed, loss, params);
}

void check_full_model(GradCheckReport& report, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "model"));
    ModelDims dims;
    dims.d_v = 4;
    dims.merge = 2;
    dims.d_t = 6;
    dims.d_h = 5;
    dims.vocab = 4;
    dims.n_classes = 2;
    dims.patch_size = 2;
    dims.n_blocks = 2;
    auto model = build_model(dims, ProjectorKind::Hybrid, rng);
    auto& hc = std::get<HybridCompressor>(model.projector.params);
    hc.gate.w_gate = Tensor::uniform({dims.merge * dims.d_v, 2}, rng, -0.5, 0.5);
    hc.emotion = make_expert(dims.merge * dims.d_v, dims.d_h, dims.d_t, rng);
    VisualEmbeddings embeddings(Tensor::uniform({4, dims.d_v}, rng, -1.0, 1.0));
    const std::vector<int> text = {0, static_cast<int>(rng.next_int(dims.vocab))};
    const std::vector<int> target = {static_cast<int>(rng.next_int(dims.n_classes))};

    Params params;
    for (auto& p : parameters(model)) params.push_back({p.name, p.tensor});
    auto loss = [&]() {
        return ops::cross_entropy(model_forward(model, embeddings, text).logits, target);
    };
    check_block(report, "model", seed, loss, params);
}

}  // namespace

GradCheckReport standard_grad_checks(int seeds) {
    if (seeds <= 0) throw ConfigError("grad check needs at least one seed");
    GradCheckReport report;
    for (int s = 0; s < seeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        GradCheckReport round;
        check_primitive_ops(round, seed);
        check_expert(round, seed);
        check_gate(round, seed);
        check_projector(round, ProjectorKind::Mlp, seed);
        check_projector(round, ProjectorKind::Fusion, seed);
        check_projector(round, ProjectorKind::Hybrid, seed);
        check_adapter_path(round, seed);
        check_full_model(round, seed);
        for (auto& e : round.entries) {
            report.entries.push_back({"seed" + std::to_string(s) + "/" + e.name,
                                      e.max_rel_err});
        }
    }
    return report;
}

}  // namespace moevl

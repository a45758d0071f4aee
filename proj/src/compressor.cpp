#include "moevl/compressor.hpp"

#include <cmath>

namespace moevl {

namespace {

Tensor init_weight(int fan_in, int fan_out, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform({fan_in, fan_out}, rng, -bound, bound);
}

Tensor two_layer_forward(const Tensor& x, const TwoLayerMlp& p,
                         Tensor (*activation)(const Tensor&)) {
    Tensor hidden = activation(ops::add_rowvec(ops::matmul(x, p.w1), p.b1));
    return ops::add_rowvec(ops::matmul(hidden, p.w2), p.b2);
}

void visit_two_layer(TwoLayerMlp& p, const std::string& prefix,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + "/w1", p.w1);
    fn(prefix + "/b1", p.b1);
    fn(prefix + "/w2", p.w2);
    fn(prefix + "/b2", p.b2);
}

void visit_expert(ExpertParams& p, const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + "/w1", p.w1);
    fn(prefix + "/b1", p.b1);
    fn(prefix + "/w2", p.w2);
    fn(prefix + "/b2", p.b2);
    fn(prefix + "/ln_gamma", p.ln_gamma);
    fn(prefix + "/ln_beta", p.ln_beta);
}

}  // namespace

VisualEmbeddings::VisualEmbeddings(Tensor v) : values(std::move(v)) {
    if (values.rank() != 2) {
        throw ShapeError("visual embeddings must be rank 2, got " + shape_str(values.shape));
    }
    fec_source.assign(static_cast<std::size_t>(values.rows()), 0);
}

VisualEmbeddings::VisualEmbeddings(Tensor v, std::vector<std::uint8_t> tags)
    : values(std::move(v)), fec_source(std::move(tags)) {
    if (values.rank() != 2) {
        throw ShapeError("visual embeddings must be rank 2, got " + shape_str(values.shape));
    }
    if (fec_source.size() != static_cast<std::size_t>(values.rows())) {
        throw ShapeError("visual embeddings: " + std::to_string(fec_source.size()) +
                         " source tags for " + std::to_string(values.rows()) + " tokens");
    }
}

const char* projector_kind_name(ProjectorKind kind) {
    switch (kind) {
        case ProjectorKind::Mlp: return "mlp";
        case ProjectorKind::Fusion: return "fusion";
        case ProjectorKind::Hybrid: return "hc";
    }
    throw ContractError("unknown projector kind");
}

ProjectorKind projector_kind_from_name(const std::string& name) {
    if (name == "mlp") return ProjectorKind::Mlp;
    if (name == "fusion") return ProjectorKind::Fusion;
    if (name == "hc") return ProjectorKind::Hybrid;
    throw ConfigError("unknown projector variant '" + name + "' (expected mlp, fusion, or hc)");
}

Tensor token_merge(const VisualEmbeddings& e, int k) {
    return ops::merge_rows(e.values, k);
}

Tensor expert_forward(const Tensor& x, const ExpertParams& expert) {
    Tensor hidden = ops::gelu(ops::add_rowvec(ops::matmul(x, expert.w1), expert.b1));
    Tensor projected = ops::add_rowvec(ops::matmul(hidden, expert.w2), expert.b2);
    return ops::layer_norm(projected, expert.ln_gamma, expert.ln_beta);
}

Tensor gate_forward(const Tensor& x, const GateParams& gate) {
    Tensor attended = ops::self_attention(x, gate.wq, gate.wk, gate.wv);
    Tensor logits = ops::add_rowvec(ops::matmul(attended, gate.w_gate), gate.b_gate);
    if (logits.cols() != 2) {
        throw ShapeError("gate_forward: routing head must produce 2 logits, got " +
                         shape_str(logits.shape));
    }
    return ops::select_col(ops::softmax(logits, 1), 0);
}

VisualTokens hybrid_compress(const VisualEmbeddings& e, const HybridCompressor& hc, int k) {
    Tensor x = token_merge(e, k);
    Tensor emotion = expert_forward(x, hc.emotion);
    Tensor general = expert_forward(x, hc.general);
    Tensor g = gate_forward(x, hc.gate);
    Tensor blended = ops::add(ops::scale_rows(emotion, g),
                              ops::scale_rows(general, ops::affine(g, -1.0, 1.0)));
    return VisualTokens{std::move(blended), g.data};
}

VisualTokens projector_forward(const Projector& projector, const VisualEmbeddings& e) {
    if (const auto* hc = std::get_if<HybridCompressor>(&projector.params)) {
        return hybrid_compress(e, *hc, projector.merge_factor);
    }
    Tensor x = token_merge(e, projector.merge_factor);
    if (const auto* mlp = std::get_if<MlpProjector>(&projector.params)) {
        Tensor out = two_layer_forward(x, mlp->net, ops::relu);
        return VisualTokens{std::move(out),
                            std::vector<double>(static_cast<std::size_t>(x.rows()), 0.5)};
    }
    const auto& fusion = std::get<FusionProjector>(projector.params);
    Tensor a = two_layer_forward(x, fusion.branch_a, ops::relu);
    Tensor b = two_layer_forward(x, fusion.branch_b, ops::relu);
    Tensor ratio = ops::logistic(two_layer_forward(x, fusion.ratio, ops::relu));
    Tensor out = ops::add(ops::scale_rows(a, ratio),
                          ops::scale_rows(b, ops::affine(ratio, -1.0, 1.0)));
    return VisualTokens{std::move(out), ratio.data};
}

std::size_t param_count(const TwoLayerMlp& p) {
    return p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size();
}

std::size_t param_count(const ExpertParams& p) {
    return p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size() +
           p.ln_gamma.size() + p.ln_beta.size();
}

std::size_t param_count(const GateParams& p) {
    return p.wq.size() + p.wk.size() + p.wv.size() + p.w_gate.size() + p.b_gate.size();
}

std::size_t param_count(const MlpProjector& p) { return param_count(p.net); }

std::size_t param_count(const FusionProjector& p) {
    return fusion_core_param_count(p) + param_count(p.ratio);
}

std::size_t param_count(const HybridCompressor& p) {
    return param_count(p.emotion) + param_count(p.general) + param_count(p.gate);
}

std::size_t param_count(const Projector& p) {
    return std::visit([](const auto& v) { return param_count(v); }, p.params);
}

std::size_t fusion_core_param_count(const FusionProjector& p) {
    return param_count(p.branch_a) + param_count(p.branch_b);
}

TwoLayerMlp make_two_layer_mlp(int d_in, int d_h, int d_out, Rng& rng) {
    TwoLayerMlp p;
    p.w1 = init_weight(d_in, d_h, rng);
    p.b1 = Tensor::zeros({d_h});
    p.w2 = init_weight(d_h, d_out, rng);
    p.b2 = Tensor::zeros({d_out});
    return p;
}

ExpertParams make_expert(int d_in, int d_h, int d_t, Rng& rng) {
    ExpertParams p;
    p.w1 = init_weight(d_in, d_h, rng);
    p.b1 = Tensor::zeros({d_h});
    p.w2 = init_weight(d_h, d_t, rng);
    p.b2 = Tensor::zeros({d_t});
    p.ln_gamma = Tensor::full({d_t}, 1.0);
    p.ln_beta = Tensor::zeros({d_t});
    return p;
}

GateParams make_gate(int d_in, Rng& rng) {
    GateParams p;
    p.wq = init_weight(d_in, d_in, rng);
    p.wk = init_weight(d_in, d_in, rng);
    p.wv = init_weight(d_in, d_in, rng);
    // The logit head starts at zero so every token opens at exactly 0.5/0.5
    // and later specialization is attributable to training. The attention
    // projections stay random; they receive gradient as soon as the head
    // moves off zero.
    p.w_gate = Tensor::zeros({d_in, 2});
    p.b_gate = Tensor::zeros({2});
    return p;
}

Projector make_projector(ProjectorKind kind, int d_v, int k, int d_h, int d_t, Rng& rng) {
    if (d_v <= 0 || k <= 0 || d_h <= 0 || d_t <= 0) {
        throw ConfigError("make_projector: dimensions must be positive");
    }
    const int d_in = d_v * k;
    Projector projector;
    projector.kind = kind;
    projector.merge_factor = k;
    switch (kind) {
        case ProjectorKind::Mlp:
            projector.params = MlpProjector{make_two_layer_mlp(d_in, d_h, d_t, rng)};
            break;
        case ProjectorKind::Fusion: {
            FusionProjector fusion;
            fusion.branch_a = make_two_layer_mlp(d_in, d_h, d_t, rng);
            fusion.branch_b = make_two_layer_mlp(d_in, d_h, d_t, rng);
            fusion.ratio = make_two_layer_mlp(d_in, d_h, 1, rng);
            projector.params = std::move(fusion);
            break;
        }
        case ProjectorKind::Hybrid: {
            HybridCompressor hc;
            // Both experts start from the same draw, so the blend is
            // gate-invariant until training moves one of them. The first
            // routing pressure then tracks the trainable expert's learned
            // displacement instead of the sign of an unrelated random draw.
            hc.emotion = make_expert(d_in, d_h, d_t, rng);
            hc.general = hc.emotion;
            hc.gate = make_gate(d_in, rng);
            projector.params = std::move(hc);
            break;
        }
    }
    return projector;
}

void visit_params(Projector& projector, const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn) {
    if (auto* mlp = std::get_if<MlpProjector>(&projector.params)) {
        visit_two_layer(mlp->net, prefix + "/mlp", fn);
        return;
    }
    if (auto* fusion = std::get_if<FusionProjector>(&projector.params)) {
        visit_two_layer(fusion->branch_a, prefix + "/fusion/branch_a", fn);
        visit_two_layer(fusion->branch_b, prefix + "/fusion/branch_b", fn);
        visit_two_layer(fusion->ratio, prefix + "/fusion/ratio", fn);
        return;
    }
    auto& hc = std::get<HybridCompressor>(projector.params);
    visit_expert(hc.emotion, prefix + "/hc/emotion", fn);
    visit_expert(hc.general, prefix + "/hc/general", fn);
    fn(prefix + "/hc/gate/wq", hc.gate.wq);
    fn(prefix + "/hc/gate/wk", hc.gate.wk);
    fn(prefix + "/hc/gate/wv", hc.gate.wv);
    fn(prefix + "/hc/gate/w_gate", hc.gate.w_gate);
    fn(prefix + "/hc/gate/b_gate", hc.gate.b_gate);
}

}  // namespace moevl

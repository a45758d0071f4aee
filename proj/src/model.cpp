#include "moevl/model.hpp"

#include <cmath>

#include "moevl/errors.hpp"
#include "moevl/ops.hpp"

namespace moevl {

namespace {

Tensor uniform_fan_in(int d_in, int d_out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    return Tensor::uniform({d_in, d_out}, rng, -bound, bound);
}

DecoderBlock make_block(int d_t, int d_h, Rng& rng) {
    DecoderBlock block;
    block.ln1_gamma = Tensor::full({d_t}, 1.0);
    block.ln1_beta = Tensor::zeros({d_t});
    block.wq = uniform_fan_in(d_t, d_t, rng);
    block.wk = uniform_fan_in(d_t, d_t, rng);
    block.wv = uniform_fan_in(d_t, d_t, rng);
    block.ln2_gamma = Tensor::full({d_t}, 1.0);
    block.ln2_beta = Tensor::zeros({d_t});
    block.mlp = make_two_layer_mlp(d_t, d_h, d_t, rng);
    return block;
}

}  // namespace

ToyModel build_model(const ModelDims& dims, ProjectorKind kind, Rng& rng) {
    if (dims.vocab <= 0 || dims.n_classes <= 0 || dims.n_blocks <= 0) {
        throw ConfigError("model dims must be positive: vocab=" + std::to_string(dims.vocab) +
                          " classes=" + std::to_string(dims.n_classes) +
                          " blocks=" + std::to_string(dims.n_blocks));
    }
    ToyModel model;
    model.dims = dims;
    model.embedder = make_patch_embedder(dims.patch_size, dims.d_v, rng);
    model.projector = make_projector(kind, dims.d_v, dims.merge, dims.d_h, dims.d_t, rng);
    for (int i = 0; i < dims.n_blocks; ++i) {
        model.blocks.push_back(make_block(dims.d_t, dims.d_h, rng));
    }
    model.text_table = uniform_fan_in(dims.vocab, dims.d_t, rng);
    model.cls_w = uniform_fan_in(dims.d_t, dims.n_classes, rng);
    model.cls_b = Tensor::zeros({dims.n_classes});
    validate_model(model);
    return model;
}

void validate_model(const ToyModel& model) {
    const int d_t = model.dims.d_t;
    const int projector_out = [&] {
        switch (model.projector.kind) {
            case ProjectorKind::Mlp:
                return std::get<MlpProjector>(model.projector.params).net.w2.cols();
            case ProjectorKind::Fusion:
                return std::get<FusionProjector>(model.projector.params).branch_a.w2.cols();
            case ProjectorKind::Hybrid:
                return std::get<HybridCompressor>(model.projector.params).general.w2.cols();
        }
        return -1;
    }();
    if (projector_out != d_t) {
        throw ConfigError("projector emits width " + std::to_string(projector_out) +
                          " but the decoder expects " + std::to_string(d_t));
    }
    if (model.text_table.cols() != d_t) {
        throw ConfigError("text embedding width " + std::to_string(model.text_table.cols()) +
                          " does not match decoder width " + std::to_string(d_t));
    }
    if (model.cls_w.rows() != d_t) {
        throw ConfigError("classifier expects width " + std::to_string(model.cls_w.rows()) +
                          " but the decoder emits " + std::to_string(d_t));
    }
    for (const auto& block : model.blocks) {
        if (block.wq.rows() != d_t || block.mlp.w1.rows() != d_t ||
            block.mlp.w2.cols() != d_t) {
            throw ConfigError("decoder block widths do not match d_t=" + std::to_string(d_t));
        }
    }
}

std::vector<LoraTarget> lora_targets(const ToyModel& model) {
    std::vector<LoraTarget> targets;
    const int d_t = model.dims.d_t;
    const int d_h = model.dims.d_h;
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const std::string prefix = "decoder/" + std::to_string(i) + "/";
        targets.push_back({prefix + "attn/wq", d_t, d_t});
        targets.push_back({prefix + "attn/wk", d_t, d_t});
        targets.push_back({prefix + "attn/wv", d_t, d_t});
        targets.push_back({prefix + "mlp/w1", d_t, d_h});
        targets.push_back({prefix + "mlp/w2", d_h, d_t});
    }
    return targets;
}

AdapterSet build_adapter_set(const ToyModel& model, const std::string& name, int rank,
                             double alpha, double dropout_p, Rng& rng) {
    AdapterSet set;
    set.name = name;
    for (const auto& target : lora_targets(model)) {
        set.adapters.push_back(
            make_adapter(name, target.name, target.d_in, target.d_out, rank, alpha, dropout_p,
                         rng));
    }
    return set;
}

namespace {

// base matmul, routed through the active adapter when one wraps this target.
Tensor project(const Tensor& x, const Tensor& w, const std::string& target,
               const ToyModel& model, const ForwardOptions& opts) {
    const LoraAdapter* adapter = model.adapters.find_active(target);
    if (adapter == nullptr) return ops::matmul(x, w);
    if (opts.training && adapter->dropout_p > 0.0) {
        if (opts.dropout_rng == nullptr) {
            throw ContractError("training forward with adapter dropout needs a dropout rng");
        }
        return lora_forward(x, w, *adapter, true, *opts.dropout_rng);
    }
    Rng inert(0);
    return lora_forward(x, w, *adapter, false, inert);
}

Tensor block_forward(const Tensor& x, const DecoderBlock& block, std::size_t index,
                     const ToyModel& model, const ForwardOptions& opts) {
    const std::string prefix = "decoder/" + std::to_string(index) + "/";
    Tensor normed = ops::layer_norm(x, block.ln1_gamma, block.ln1_beta);
    Tensor attn = ops::attention(project(normed, block.wq, prefix + "attn/wq", model, opts),
                                 project(normed, block.wk, prefix + "attn/wk", model, opts),
                                 project(normed, block.wv, prefix + "attn/wv", model, opts));
    Tensor h = ops::add(x, attn);

    Tensor normed2 = ops::layer_norm(h, block.ln2_gamma, block.ln2_beta);
    Tensor hidden = ops::gelu(ops::add_rowvec(
        project(normed2, block.mlp.w1, prefix + "mlp/w1", model, opts), block.mlp.b1));
    Tensor mlp_out = ops::add_rowvec(
        project(hidden, block.mlp.w2, prefix + "mlp/w2", model, opts), block.mlp.b2);
    return ops::add(h, mlp_out);
}

}  // namespace

ForwardResult model_forward(const ToyModel& model, const VisualEmbeddings& embeddings,
                            const std::vector<int>& text, const ForwardOptions& opts) {
    VisualTokens visual = projector_forward(model.projector, embeddings);
    Tensor tokens = visual.values;
    if (!text.empty()) {
        tokens = ops::concat_rows(tokens, ops::gather_rows(model.text_table, text));
    }
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        tokens = block_forward(tokens, model.blocks[i], i, model, opts);
    }
    Tensor pooled = ops::mean_rows(tokens);
    ForwardResult result;
    result.logits = ops::add_rowvec(ops::matmul(pooled, model.cls_w), model.cls_b);
    result.gate_trace = std::move(visual.gate_trace);
    return result;
}

std::vector<ParamRef> parameters(ToyModel& model) {
    std::vector<ParamRef> params;
    params.push_back({"embedder/weight", &model.embedder.weight});
    params.push_back({"embedder/bias", &model.embedder.bias});
    visit_params(model.projector, "projector",
                 [&](const std::string& name, Tensor& t) { params.push_back({name, &t}); });
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        auto& b = model.blocks[i];
        const std::string prefix = "decoder/" + std::to_string(i) + "/";
        params.push_back({prefix + "ln1/gamma", &b.ln1_gamma});
        params.push_back({prefix + "ln1/beta", &b.ln1_beta});
        params.push_back({prefix + "attn/wq", &b.wq});
        params.push_back({prefix + "attn/wk", &b.wk});
        params.push_back({prefix + "attn/wv", &b.wv});
        params.push_back({prefix + "ln2/gamma", &b.ln2_gamma});
        params.push_back({prefix + "ln2/beta", &b.ln2_beta});
        params.push_back({prefix + "mlp/w1", &b.mlp.w1});
        params.push_back({prefix + "mlp/b1", &b.mlp.b1});
        params.push_back({prefix + "mlp/w2", &b.mlp.w2});
        params.push_back({prefix + "mlp/b2", &b.mlp.b2});
    }
    params.push_back({"text_embed/table", &model.text_table});
    params.push_back({"classifier/w", &model.cls_w});
    params.push_back({"classifier/b", &model.cls_b});
    for (auto& set : model.adapters.sets()) {
        for (auto& adapter : set.adapters) {
            const std::string prefix = "lora/" + set.name + "/" + adapter.target + "/";
            params.push_back({prefix + "A", &adapter.a});
            params.push_back({prefix + "B", &adapter.b});
        }
    }
    return params;
}

}  // namespace moevl

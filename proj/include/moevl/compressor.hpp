#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "moevl/ops.hpp"
#include "moevl/tensor.hpp"

namespace moevl {

// Visual token sequence entering the projector: one row per token. fec_source
// flags tokens that came from appended key frames rather than the original
// sequence; synthetic data leaves it all zero.
struct VisualEmbeddings {
    Tensor values;  // [n1 x d_v]
    std::vector<std::uint8_t> fec_source;

    explicit VisualEmbeddings(Tensor v);
    VisualEmbeddings(Tensor v, std::vector<std::uint8_t> tags);
};

// Projector output: compressed tokens in the text width plus the per-token
// routing weight that produced them. Variants without a learned gate fill the
// trace with the 0.5 sentinel.
struct VisualTokens {
    Tensor values;  // [n2 x d_t]
    std::vector<double> gate_trace;
};

// Two stacked linear maps; the activation between them is chosen by the
// caller (relu for projector branches, gelu inside the decoder).
struct TwoLayerMlp {
    Tensor w1, b1, w2, b2;
};

// One expert: Linear -> GELU -> Linear -> LayerNorm.
struct ExpertParams {
    Tensor w1, b1;              // [d_in x d_h], [d_h]
    Tensor w2, b2;              // [d_h x d_t], [d_t]
    Tensor ln_gamma, ln_beta;   // [d_t]
};

// Attention-conditioned router: single-head self-attention over the merged
// tokens followed by a two-logit head. The routing weight is the softmax
// probability of the emotion expert (column 0).
struct GateParams {
    Tensor wq, wk, wv;      // [d_in x d_in]
    Tensor w_gate;          // [d_in x 2]
    Tensor b_gate;          // [2]
};

struct MlpProjector {
    TwoLayerMlp net;  // Linear -> ReLU -> Linear
};

// Two parallel MLP branches blended by a learned per-token ratio
// r = logistic(mlp(x)); output = r * branch_a + (1-r) * branch_b.
struct FusionProjector {
    TwoLayerMlp branch_a, branch_b;
    TwoLayerMlp ratio;  // d_in -> d_h -> 1
};

struct HybridCompressor {
    ExpertParams emotion, general;
    GateParams gate;
};

enum class ProjectorKind { Mlp, Fusion, Hybrid };

const char* projector_kind_name(ProjectorKind kind);
ProjectorKind projector_kind_from_name(const std::string& name);

// A projector of any variant. All variants share the same interface:
// [n1 x d_v] embeddings in, [n2 x d_t] tokens out, with n2 = ceil(n1/k).
struct Projector {
    ProjectorKind kind;
    int merge_factor;
    std::variant<MlpProjector, FusionProjector, HybridCompressor> params;
};

// Concatenates each run of k consecutive tokens into one merged token,
// repeating the final token when k does not divide the sequence length.
Tensor token_merge(const VisualEmbeddings& e, int k);

Tensor expert_forward(const Tensor& x, const ExpertParams& expert);

// Per-token routing weights in (0,1), shape [n x 1].
Tensor gate_forward(const Tensor& x, const GateParams& gate);

// Token merge, both experts, and the gate-weighted blend
//   out = g * emotion(x) + (1-g) * general(x)
// with the scalar weight of each token broadcast across its features.
VisualTokens hybrid_compress(const VisualEmbeddings& e, const HybridCompressor& hc,
                             int k);

VisualTokens projector_forward(const Projector& projector, const VisualEmbeddings& e);

std::size_t param_count(const TwoLayerMlp& p);
std::size_t param_count(const ExpertParams& p);
std::size_t param_count(const GateParams& p);
std::size_t param_count(const MlpProjector& p);
std::size_t param_count(const FusionProjector& p);
std::size_t param_count(const HybridCompressor& p);
std::size_t param_count(const Projector& p);

// The two branches alone, excluding the ratio head.
std::size_t fusion_core_param_count(const FusionProjector& p);

TwoLayerMlp make_two_layer_mlp(int d_in, int d_h, int d_out, Rng& rng);
ExpertParams make_expert(int d_in, int d_h, int d_t, Rng& rng);
GateParams make_gate(int d_in, Rng& rng);
Projector make_projector(ProjectorKind kind, int d_v, int k, int d_h, int d_t, Rng& rng);

// Visits every tensor of the projector in a fixed documented order, with
// slash-separated names below `prefix`. The same order is used for the
// parameter registry and the checkpoint layout.
void visit_params(Projector& projector, const std::string& prefix,
                  const std::function<void(const std::string&, Tensor&)>& fn);

}  // namespace moevl

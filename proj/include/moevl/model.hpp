#pragma once

#include <string>
#include <vector>

#include "moevl/compressor.hpp"
#include "moevl/fec.hpp"
#include "moevl/lora.hpp"
#include "moevl/rng.hpp"
#include "moevl/tensor.hpp"

namespace moevl {

struct ModelDims {
    int d_v = 16;        // visual embedding width
    int merge = 4;       // consecutive tokens concatenated before projection
    int d_t = 32;        // decoder / text embedding width
    int d_h = 32;        // hidden width of experts and decoder MLPs
    int vocab = 16;      // text vocabulary size
    int n_classes = 4;   // classifier output width
    int patch_size = 4;  // pixel patch edge for the embedder
    int n_blocks = 2;    // decoder depth
};

// One pre-norm decoder block: x + attn(ln(x)), then x + mlp(ln(x)).
struct DecoderBlock {
    Tensor ln1_gamma, ln1_beta;
    Tensor wq, wk, wv;  // [d_t x d_t]
    Tensor ln2_gamma, ln2_beta;
    TwoLayerMlp mlp;  // d_t -> d_h -> d_t, GELU
};

// Patch embedder -> projector -> decoder blocks over [visual; text] tokens ->
// mean pool -> classifier. The registry holds the named adapter sets wrapping
// the decoder's linear maps.
struct ToyModel {
    ModelDims dims;
    PatchEmbedder embedder;
    Projector projector;
    std::vector<DecoderBlock> blocks;
    Tensor text_table;  // [vocab x d_t]
    Tensor cls_w;       // [d_t x C]
    Tensor cls_b;       // [C]
    AdapterRegistry adapters;
};

ToyModel build_model(const ModelDims& dims, ProjectorKind kind, Rng& rng);

// Widths every block must agree on; build_model calls this, and loaders
// re-check after swapping tensors in.
void validate_model(const ToyModel& model);

// The decoder's adapter-wrappable linear maps, with their in/out widths.
struct LoraTarget {
    std::string name;
    int d_in = 0;
    int d_out = 0;
};
std::vector<LoraTarget> lora_targets(const ToyModel& model);

// One adapter per target under the given set name, freshly initialized.
AdapterSet build_adapter_set(const ToyModel& model, const std::string& name, int rank,
                             double alpha, double dropout_p, Rng& rng);

struct ForwardOptions {
    bool training = false;
    Rng* dropout_rng = nullptr;  // required when training with adapter dropout
};

struct ForwardResult {
    Tensor logits;                  // [1 x C]
    std::vector<double> gate_trace;  // one entry per merged visual token
};

ForwardResult model_forward(const ToyModel& model, const VisualEmbeddings& embeddings,
                            const std::vector<int>& text, const ForwardOptions& opts = {});

// Stable name -> storage mapping over every tensor in the model, adapters
// included. Order is fixed by construction, so checkpoints and optimizer
// state are reproducible.
struct ParamRef {
    std::string name;
    Tensor* tensor;
};
std::vector<ParamRef> parameters(ToyModel& model);

}  // namespace moevl

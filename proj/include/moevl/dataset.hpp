#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moevl/compressor.hpp"
#include "moevl/tensor.hpp"

namespace moevl {

enum class Domain { General, Emotion };

const char* domain_name(Domain d);

// One synthetic classification instance. Embeddings play the role of encoder
// output; text is a short token sequence whose first id tags the domain.
struct SyntheticSample {
    VisualEmbeddings embeddings;  // [n1 x d_v]
    std::vector<int> text;
    int label = 0;
    Domain domain = Domain::General;
};

struct DataParams {
    std::uint64_t seed = 1234;
    int n = 2000;
    int n1 = 8;    // visual tokens per sample
    int d_v = 16;  // embedding width
    int m_text = 4;
    int vocab = 16;
    int n_classes = 4;
    double label_noise = 0.05;
    double emotion_fraction = 0.5;
};

// Two separable domains:
//  - general: a low-frequency wave across all tokens whose phase encodes the
//    label;
//  - emotion: a two-token high-magnitude block carrying one of a fixed set of
//    orthonormal signature vectors, signed by the label's parity.
// Labels are drawn uniformly; with probability label_noise the stored label
// is flipped to a different class while the features keep the true one.
// Domain counts follow emotion_fraction exactly (rounded), evenly
// interleaved. Identical params produce identical samples.
std::vector<SyntheticSample> generate_dataset(const DataParams& params);

// The orthonormal signature vectors behind the emotion domain. Fixed
// internally, independent of the dataset seed, so probes stay valid across
// splits. Index ceil(n_classes/2) vectors; label 2k+s maps to vector k with
// sign +/- for s = 0/1.
std::vector<std::vector<double>> emotion_signatures(int d_v, int n_classes);

// Closed-form readout of the generating feature: phase correlation for the
// general domain, signed signature projection for the emotion domain. This is
// the ceiling any learned classifier is measured against.
int probe_label(const Tensor& embeddings, Domain domain, int n_classes);

double probe_accuracy(const std::vector<SyntheticSample>& samples, int n_classes);

// Binary dataset file ("EQDS"): params echo plus per-sample records with
// 64-bit values, so a written dataset reloads exactly.
void save_dataset(const std::string& path, const DataParams& params,
                  const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> load_dataset(const std::string& path, DataParams* params_out);

}  // namespace moevl

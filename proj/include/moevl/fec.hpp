#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moevl/compressor.hpp"
#include "moevl/tensor.hpp"

namespace moevl {

// Emotion category order used everywhere a probability vector appears:
// files, reports, and FaceObservation::emotion_probs.
inline constexpr std::array<const char*, 7> kEmotionLabels = {
    "angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"};

struct FrameRecord {
    int index = 0;
    double timestamp = 0.0;
    Tensor pixels;  // [h x w x 3], values in [0,1]
};

struct BoundingBox {
    int x = 0, y = 0;
    int width = 0, height = 0;
};

struct FaceObservation {
    BoundingBox bbox;
    std::vector<std::array<double, 2>> landmarks;
    std::array<double, 7> emotion_probs{};
};

double max_confidence(const FaceObservation& face);

// Probabilities must be non-negative and sum to 1 within 1e-6.
void validate_observation(const FaceObservation& face);

// Detection backend. Implementations must be deterministic: the same frame
// always yields the same observations.
class FaceScorer {
public:
    virtual ~FaceScorer() = default;
    virtual std::vector<FaceObservation> detect(const FrameRecord& frame) const = 0;
};

// Reference scorer driven by a pre-recorded observation table keyed by frame
// index, as loaded from a sidecar file. Frames without an entry have no faces.
class ScriptedScorer : public FaceScorer {
public:
    explicit ScriptedScorer(std::map<int, std::vector<FaceObservation>> observations);
    std::vector<FaceObservation> detect(const FrameRecord& frame) const override;

private:
    std::map<int, std::vector<FaceObservation>> observations_;
};

struct KeyFrameHit {
    int frame_index = 0;
    FaceObservation face;
};

// All (frame, face) pairs whose top emotion probability reaches tau, in
// ascending frame order. tau must lie in (0, 1].
std::vector<KeyFrameHit> select_key_frames(const std::vector<FrameRecord>& frames,
                                           const FaceScorer& scorer, double tau);

// Zeroes every pixel outside the union of the face boxes; pixels inside any
// box are preserved bit-exactly. Boxes must lie within the frame.
FrameRecord apply_spatial_mask(const FrameRecord& frame,
                               const std::vector<FaceObservation>& faces);

// Original frames followed by the appended key frames; the first
// original_count entries are the untouched input sequence.
struct ComposedSequence {
    std::vector<FrameRecord> frames;
    std::size_t original_count = 0;
};

// Appends the (already masked) key frames after the originals, ordered by
// ascending original timestamp. Appended frames keep their source index and
// timestamp so their provenance stays visible.
ComposedSequence compose_sequence(const std::vector<FrameRecord>& frames,
                                  std::vector<FrameRecord> key_frames);

// Selection, masking, and composition in one step: each frame with at least
// one qualifying face is masked with exactly its qualifying faces.
struct FecResult {
    std::vector<KeyFrameHit> selected;
    ComposedSequence sequence;
};
FecResult run_fec(const std::vector<FrameRecord>& frames, const FaceScorer& scorer,
                  double tau);

// Linear map from a flattened pixel patch (patch_size^2 * 3 values, row-major
// y, x, channel) to a d_v-dimensional token.
struct PatchEmbedder {
    int patch_size = 0;
    Tensor weight;  // [patch_size^2*3 x d_v]
    Tensor bias;    // [d_v]
};

PatchEmbedder make_patch_embedder(int patch_size, int d_v, Rng& rng);

// Cuts every frame into non-overlapping patches (raster order: top-to-bottom,
// left-to-right), embeds each patch, and concatenates the tokens in frame
// order. Tokens of appended key frames carry a nonzero source tag. Frame
// dimensions must be divisible by the patch size.
VisualEmbeddings fec_to_embeddings(const ComposedSequence& sequence,
                                   const PatchEmbedder& embedder);

}  // namespace moevl

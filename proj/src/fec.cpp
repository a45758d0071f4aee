#include "moevl/fec.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "moevl/errors.hpp"
#include "moevl/ops.hpp"

namespace moevl {

namespace {

void validate_frame(const FrameRecord& frame) {
    if (frame.pixels.rank() != 3 || frame.pixels.shape[2] != 3) {
        throw ShapeError("frame " + std::to_string(frame.index) +
                         " pixels must be [h x w x 3], got " + shape_str(frame.pixels.shape));
    }
}

void validate_timestamps(const std::vector<FrameRecord>& frames) {
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (!(frames[i].timestamp > frames[i - 1].timestamp)) {
            throw ContractError("frame timestamps must be strictly increasing: frame " +
                                std::to_string(frames[i].index) + " at t=" +
                                std::to_string(frames[i].timestamp) + " follows t=" +
                                std::to_string(frames[i - 1].timestamp));
        }
    }
}

void validate_bbox(const BoundingBox& b, const FrameRecord& frame) {
    const int h = frame.pixels.shape[0];
    const int w = frame.pixels.shape[1];
    if (b.width <= 0 || b.height <= 0 || b.x < 0 || b.y < 0 || b.x + b.width > w ||
        b.y + b.height > h) {
        throw ContractError("face box [x=" + std::to_string(b.x) + " y=" + std::to_string(b.y) +
                            " w=" + std::to_string(b.width) + " h=" + std::to_string(b.height) +
                            "] exceeds frame " + std::to_string(frame.index) + " (" +
                            std::to_string(w) + "x" + std::to_string(h) + ")");
    }
}

}  // namespace

double max_confidence(const FaceObservation& face) {
    return *std::max_element(face.emotion_probs.begin(), face.emotion_probs.end());
}

void validate_observation(const FaceObservation& face) {
    double sum = 0.0;
    for (double p : face.emotion_probs) {
        if (!(p >= 0.0)) {
            throw ContractError("emotion probabilities must be non-negative, got " +
                                std::to_string(p));
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw ContractError("emotion probabilities must sum to 1, got " + std::to_string(sum));
    }
}

ScriptedScorer::ScriptedScorer(std::map<int, std::vector<FaceObservation>> observations)
    : observations_(std::move(observations)) {
    for (const auto& [index, faces] : observations_) {
        (void)index;
        for (const auto& face : faces) validate_observation(face);
    }
}

std::vector<FaceObservation> ScriptedScorer::detect(const FrameRecord& frame) const {
    auto it = observations_.find(frame.index);
    if (it == observations_.end()) return {};
    return it->second;
}

std::vector<KeyFrameHit> select_key_frames(const std::vector<FrameRecord>& frames,
                                           const FaceScorer& scorer, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) {
        throw ConfigError("tau must lie in (0, 1], got " + std::to_string(tau));
    }
    validate_timestamps(frames);
    std::vector<KeyFrameHit> hits;
    for (const auto& frame : frames) {
        validate_frame(frame);
        for (const auto& face : scorer.detect(frame)) {
            validate_observation(face);
            if (max_confidence(face) >= tau) {
                hits.push_back({frame.index, face});
            }
        }
    }
    return hits;
}

FrameRecord apply_spatial_mask(const FrameRecord& frame,
                               const std::vector<FaceObservation>& faces) {
    validate_frame(frame);
    if (faces.empty()) {
        throw ContractError("spatial mask requires at least one face box (frame " +
                            std::to_string(frame.index) + ")");
    }
    const int h = frame.pixels.shape[0];
    const int w = frame.pixels.shape[1];
    std::vector<char> keep(static_cast<std::size_t>(h) * w, 0);
    for (const auto& face : faces) {
        validate_bbox(face.bbox, frame);
        for (int y = face.bbox.y; y < face.bbox.y + face.bbox.height; ++y) {
            for (int x = face.bbox.x; x < face.bbox.x + face.bbox.width; ++x) {
                keep[static_cast<std::size_t>(y) * w + x] = 1;
            }
        }
    }
    FrameRecord out = frame;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (keep[static_cast<std::size_t>(y) * w + x]) continue;
            for (int c = 0; c < 3; ++c) out.pixels.at(y, x, c) = 0.0;
        }
    }
    return out;
}

ComposedSequence compose_sequence(const std::vector<FrameRecord>& frames,
                                  std::vector<FrameRecord> key_frames) {
    validate_timestamps(frames);
    std::stable_sort(key_frames.begin(), key_frames.end(),
                     [](const FrameRecord& a, const FrameRecord& b) {
                         return a.timestamp < b.timestamp;
                     });
    ComposedSequence out;
    out.original_count = frames.size();
    out.frames = frames;
    out.frames.insert(out.frames.end(), std::make_move_iterator(key_frames.begin()),
                      std::make_move_iterator(key_frames.end()));
    return out;
}

FecResult run_fec(const std::vector<FrameRecord>& frames, const FaceScorer& scorer, double tau) {
    FecResult result;
    result.selected = select_key_frames(frames, scorer, tau);

    // Group hits by frame so a frame with several qualifying faces is masked
    // once with all of them.
    std::vector<FrameRecord> masked;
    std::size_t i = 0;
    while (i < result.selected.size()) {
        const int index = result.selected[i].frame_index;
        std::vector<FaceObservation> faces;
        while (i < result.selected.size() && result.selected[i].frame_index == index) {
            faces.push_back(result.selected[i].face);
            ++i;
        }
        auto it = std::find_if(frames.begin(), frames.end(),
                               [index](const FrameRecord& f) { return f.index == index; });
        masked.push_back(apply_spatial_mask(*it, faces));
    }
    result.sequence = compose_sequence(frames, std::move(masked));
    return result;
}

PatchEmbedder make_patch_embedder(int patch_size, int d_v, Rng& rng) {
    if (patch_size <= 0 || d_v <= 0) {
        throw ConfigError("patch embedder dimensions must be positive, got patch_size=" +
                          std::to_string(patch_size) + " d_v=" + std::to_string(d_v));
    }
    const int d_patch = patch_size * patch_size * 3;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_patch));
    PatchEmbedder pe;
    pe.patch_size = patch_size;
    pe.weight = Tensor::uniform({d_patch, d_v}, rng, -bound, bound);
    pe.bias = Tensor::zeros({d_v});
    return pe;
}

VisualEmbeddings fec_to_embeddings(const ComposedSequence& sequence,
                                   const PatchEmbedder& embedder) {
    if (sequence.frames.empty()) {
        throw ContractError("cannot embed an empty frame sequence");
    }
    const int p = embedder.patch_size;
    const int d_patch = p * p * 3;
    if (embedder.weight.rank() != 2 || embedder.weight.shape[0] != d_patch) {
        throw ShapeError("patch embedder weight must be [" + std::to_string(d_patch) +
                         " x d_v], got " + shape_str(embedder.weight.shape));
    }

    std::vector<double> patches;
    std::vector<std::uint8_t> tags;
    for (std::size_t f = 0; f < sequence.frames.size(); ++f) {
        const FrameRecord& frame = sequence.frames[f];
        validate_frame(frame);
        const int h = frame.pixels.shape[0];
        const int w = frame.pixels.shape[1];
        if (h % p != 0 || w % p != 0) {
            throw ConfigError("frame " + std::to_string(frame.index) + " is " +
                              std::to_string(w) + "x" + std::to_string(h) +
                              ", not divisible by patch size " + std::to_string(p));
        }
        const std::uint8_t tag = f >= sequence.original_count ? 1 : 0;
        for (int py = 0; py < h; py += p) {
            for (int px = 0; px < w; px += p) {
                for (int y = py; y < py + p; ++y) {
                    for (int x = px; x < px + p; ++x) {
                        for (int c = 0; c < 3; ++c) {
                            patches.push_back(frame.pixels.at(y, x, c));
                        }
                    }
                }
                tags.push_back(tag);
            }
        }
    }

    const int n_tokens = static_cast<int>(tags.size());
    Tensor flat({n_tokens, d_patch}, std::move(patches));
    Tensor tokens = ops::add_rowvec(ops::matmul(flat, embedder.weight), embedder.bias);
    return VisualEmbeddings(std::move(tokens), std::move(tags));
}

}  // namespace moevl

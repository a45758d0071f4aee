#pragma once

// Scripted ten-frame sequence shared by the key-frame tests and the
// acceptance run. Confidences are arranged so the qualifying set is {2, 7}
// at tau 0.7, {2} at tau 0.9, and empty at tau 0.95.

#include <array>
#include <map>
#include <vector>

#include "moevl/fec.hpp"
#include "moevl/rng.hpp"

namespace fixture {

inline std::array<double, 7> probs_with_top(std::size_t top_index, double top) {
    std::array<double, 7> probs{};
    probs.fill((1.0 - top) / 6.0);
    probs[top_index] = top;
    return probs;
}

inline moevl::FaceObservation face(int x, int y, int w, int h, std::size_t top_index,
                                   double top) {
    moevl::FaceObservation f;
    f.bbox = {x, y, w, h};
    f.emotion_probs = probs_with_top(top_index, top);
    return f;
}

// Ten 8x8 frames with pixel values on the 1/255 grid, so writing them to
// frame files and reading them back is lossless.
inline std::vector<moevl::FrameRecord> frames() {
    std::vector<moevl::FrameRecord> out;
    for (int i = 0; i < 10; ++i) {
        moevl::Rng rng(moevl::derive_seed(41, "fixture-frame", static_cast<std::uint64_t>(i)));
        std::vector<double> pixels(8 * 8 * 3);
        for (double& v : pixels) v = rng.next_int(256) / 255.0;
        out.push_back({i, 0.1 * (i + 1), moevl::Tensor({8, 8, 3}, std::move(pixels))});
    }
    return out;
}

// Palette indices: 0 angry, 2 fear, 3 happy, 4 sad, 5 surprise.
inline std::map<int, std::vector<moevl::FaceObservation>> observations() {
    std::map<int, std::vector<moevl::FaceObservation>> table;
    moevl::FaceObservation happy = face(2, 2, 3, 3, 3, 0.92);
    happy.landmarks = {{3.0, 3.5}, {4.0, 3.5}};
    table[2] = {happy};
    table[4] = {face(0, 0, 2, 2, 0, 0.55), face(5, 5, 3, 3, 2, 0.65)};
    table[5] = {face(1, 1, 2, 4, 5, 0.69)};
    table[7] = {face(1, 3, 4, 2, 4, 0.75)};
    return table;
}

inline moevl::ScriptedScorer scorer() { return moevl::ScriptedScorer(observations()); }

}  // namespace fixture

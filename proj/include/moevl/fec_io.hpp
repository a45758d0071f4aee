#pragma once

#include <map>
#include <string>
#include <vector>

#include "moevl/fec.hpp"

// On-disk formats for frame sequences.
//
// Frame directory: a `frames.txt` manifest plus one binary PPM (P6, maxval
// 255) per frame. Each manifest line is
//
//     <index> <timestamp> <filename>
//
// with the filename relative to the directory. Blank lines and lines starting
// with '#' are ignored. Pixel bytes map to [0,1] as v/255.
//
// Observation sidecar: one line per (frame, face), whitespace-delimited:
//
//     <frame_index> <x> <y> <width> <height> <n_landmarks> <lx1> <ly1> ... <p1> ... <p7>
//
// The seven probabilities follow the palette order angry, disgust, fear,
// happy, sad, surprise, neutral. A frame with no lines has no faces.

namespace moevl {

Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& pixels);

// Reads frames.txt and every referenced frame file. Order follows the
// manifest; timestamps are not checked here because composed sequences
// restart the clock at the appended block.
std::vector<FrameRecord> read_frame_dir(const std::string& dir);

// Writes frame_<position>.ppm files plus the manifest. Filenames are
// positional because appended key frames reuse their source frame's index.
void write_frame_dir(const std::string& dir, const std::vector<FrameRecord>& frames);

std::map<int, std::vector<FaceObservation>> read_observations(const std::string& path);
void write_observations(const std::string& path,
                        const std::map<int, std::vector<FaceObservation>>& observations);

// Human-readable summary of a selection run: threshold, counts, and one line
// per selected (frame, face) with its top emotion.
void write_selection_report(const std::string& path, const FecResult& result, double tau);

}  // namespace moevl

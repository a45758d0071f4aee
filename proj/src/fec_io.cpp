#include "moevl/fec_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "moevl/errors.hpp"

namespace moevl {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw FormatError(path + ": " + what);
}

[[noreturn]] void fail_line(const std::string& path, int line, const std::string& what) {
    fail(path, "line " + std::to_string(line) + ": " + what);
}

// Shortest decimal form that parses back to the same double.
std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Skips PPM whitespace and '#' comments, then reads one unsigned decimal.
int read_ppm_int(std::istream& in, const std::string& path) {
    int ch = in.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        }
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch)) fail(path, "expected integer in PPM header");
    long value = 0;
    while (ch != EOF && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        if (value > 1 << 20) fail(path, "PPM header value out of range");
        ch = in.get();
    }
    if (ch != EOF) in.unget();
    return static_cast<int>(value);
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char magic[2] = {};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '6') fail(path, "not a binary PPM (P6)");
    const int w = read_ppm_int(in, path);
    const int h = read_ppm_int(in, path);
    const int maxval = read_ppm_int(in, path);
    if (maxval != 255) fail(path, "unsupported maxval " + std::to_string(maxval));
    in.get();  // single whitespace separating header from pixel data
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail(path, "truncated pixel data");

    std::vector<double> values(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) values[i] = raw[i] / 255.0;
    return Tensor({h, w, 3}, std::move(values));
}

void write_ppm(const std::string& path, const Tensor& pixels) {
    if (pixels.rank() != 3 || pixels.shape[2] != 3) {
        throw ShapeError("PPM pixels must be [h x w x 3], got " + shape_str(pixels.shape));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "P6\n" << pixels.shape[1] << " " << pixels.shape[0] << "\n255\n";
    std::vector<std::uint8_t> raw(pixels.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = std::clamp(pixels.data[i], 0.0, 1.0);
        raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) fail(path, "write failed");
}

std::vector<FrameRecord> read_frame_dir(const std::string& dir) {
    const std::string manifest = dir + "/frames.txt";
    std::ifstream in(manifest);
    if (!in) fail(manifest, "cannot open");
    std::vector<FrameRecord> frames;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        FrameRecord frame;
        std::string filename;
        if (!(fields >> frame.index >> frame.timestamp >> filename)) {
            fail_line(manifest, line_no, "expected '<index> <timestamp> <filename>'");
        }
        frame.pixels = read_ppm(dir + "/" + filename);
        frames.push_back(std::move(frame));
    }
    return frames;
}

void write_frame_dir(const std::string& dir, const std::vector<FrameRecord>& frames) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::ostringstream name;
        name << "frame_" << i << ".ppm";
        write_ppm(dir + "/" + name.str(), frames[i].pixels);
        manifest << frames[i].index << " " << fmt(frames[i].timestamp) << " " << name.str()
                 << "\n";
    }
    std::ofstream out(dir + "/frames.txt");
    if (!out) fail(dir + "/frames.txt", "cannot open for writing");
    out << manifest.str();
}

std::map<int, std::vector<FaceObservation>> read_observations(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open");
    std::map<int, std::vector<FaceObservation>> table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        int frame_index = 0;
        FaceObservation face;
        int n_landmarks = 0;
        if (!(fields >> frame_index >> face.bbox.x >> face.bbox.y >> face.bbox.width >>
              face.bbox.height >> n_landmarks)) {
            fail_line(path, line_no, "expected '<frame> <x> <y> <w> <h> <n_landmarks> ...'");
        }
        if (n_landmarks < 0) fail_line(path, line_no, "negative landmark count");
        face.landmarks.resize(static_cast<std::size_t>(n_landmarks));
        for (auto& lm : face.landmarks) {
            if (!(fields >> lm[0] >> lm[1])) fail_line(path, line_no, "truncated landmark list");
        }
        for (double& p : face.emotion_probs) {
            if (!(fields >> p)) fail_line(path, line_no, "expected 7 emotion probabilities");
        }
        std::string extra;
        if (fields >> extra) fail_line(path, line_no, "trailing field '" + extra + "'");
        try {
            validate_observation(face);
        } catch (const Error& e) {
            fail_line(path, line_no, e.what());
        }
        table[frame_index].push_back(std::move(face));
    }
    return table;
}

void write_observations(const std::string& path,
                        const std::map<int, std::vector<FaceObservation>>& observations) {
    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    for (const auto& [frame_index, faces] : observations) {
        for (const auto& face : faces) {
            out << frame_index << " " << face.bbox.x << " " << face.bbox.y << " "
                << face.bbox.width << " " << face.bbox.height << " " << face.landmarks.size();
            for (const auto& lm : face.landmarks) out << " " << fmt(lm[0]) << " " << fmt(lm[1]);
            for (double p : face.emotion_probs) out << " " << fmt(p);
            out << "\n";
        }
    }
}

void write_selection_report(const std::string& path, const FecResult& result, double tau) {
    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    out << "tau " << fmt(tau) << "\n";
    out << "original_frames " << result.sequence.original_count << "\n";
    out << "key_frames " << result.sequence.frames.size() - result.sequence.original_count
        << "\n";
    out << "selected_faces " << result.selected.size() << "\n";
    for (const auto& hit : result.selected) {
        const auto& probs = hit.face.emotion_probs;
        const auto top = std::max_element(probs.begin(), probs.end());
        out << "frame " << hit.frame_index << " "
            << kEmotionLabels[static_cast<std::size_t>(top - probs.begin())] << " " << fmt(*top)
            << "\n";
    }
}

}  // namespace moevl

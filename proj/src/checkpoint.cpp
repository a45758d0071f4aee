#include "moevl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "moevl/bytes.hpp"
#include "moevl/errors.hpp"

namespace moevl {

namespace {

constexpr char kMagic[4] = {'E', 'Q', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void truncated(const std::string& path, std::istream& in) {
    const auto pos = in.tellg();
    const std::string offset =
        pos < 0 ? "end of file" : "byte " + std::to_string(static_cast<long long>(pos));
    throw FormatError("checkpoint '" + path + "' truncated at " + offset);
}

std::string read_string(const std::string& path, std::istream& in, const char* what) {
    std::uint32_t len = 0;
    if (!bytes::read_u32(in, len)) truncated(path, in);
    if (len > (1u << 20)) {
        throw FormatError("checkpoint '" + path + "': implausible " + what + " length " +
                          std::to_string(len));
    }
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len)) truncated(path, in);
    return s;
}

void write_string(std::ostream& out, const std::string& s) {
    bytes::write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

CheckpointContents read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path + "'");

    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("checkpoint '" + path + "': bad magic at byte 0");
    }
    std::uint32_t version = 0;
    if (!bytes::read_u32(in, version)) truncated(path, in);
    if (version != kVersion) {
        throw FormatError("checkpoint '" + path + "': unsupported version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kVersion) + ")");
    }

    CheckpointContents contents;
    if (!bytes::read_u64(in, contents.manifest.config_hash)) truncated(path, in);
    contents.manifest.provenance = read_string(path, in, "provenance");

    std::uint32_t count = 0;
    if (!bytes::read_u32(in, count)) truncated(path, in);
    contents.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord record;
        record.name = read_string(path, in, "tensor name");
        std::uint32_t rank = 0;
        if (!bytes::read_u32(in, rank)) truncated(path, in);
        if (rank < 1 || rank > 3) {
            throw FormatError("checkpoint '" + path + "': tensor '" + record.name +
                              "' has rank " + std::to_string(rank));
        }
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t extent = 0;
            if (!bytes::read_u32(in, extent)) truncated(path, in);
            if (extent == 0 || extent > (1u << 24)) {
                throw FormatError("checkpoint '" + path + "': tensor '" + record.name +
                                  "' has extent " + std::to_string(extent));
            }
            record.shape.push_back(static_cast<int>(extent));
            n *= extent;
        }
        record.values.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            float v = 0.0f;
            if (!bytes::read_f32(in, v)) truncated(path, in);
            record.values[j] = static_cast<double>(v);
        }
        contents.tensors.push_back(std::move(record));
    }

    char extra;
    if (in.read(&extra, 1)) {
        throw FormatError("checkpoint '" + path + "': trailing bytes after tensor records");
    }
    return contents;
}

}  // namespace

void save_checkpoint(ToyModel& model, const CheckpointManifest& manifest,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint '" + path + "'");

    out.write(kMagic, 4);
    bytes::write_u32(out, kVersion);
    bytes::write_u64(out, manifest.config_hash);
    write_string(out, manifest.provenance);

    const auto params = parameters(model);
    bytes::write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        write_string(out, p.name);
        bytes::write_u32(out, static_cast<std::uint32_t>(p.tensor->shape.size()));
        for (int extent : p.tensor->shape) {
            bytes::write_u32(out, static_cast<std::uint32_t>(extent));
        }
        for (double v : p.tensor->data) {
            bytes::write_f32(out, static_cast<float>(v));
        }
    }
    if (!out) throw FormatError("write failed for checkpoint '" + path + "'");
}

CheckpointManifest load_checkpoint(ToyModel& model, const std::string& path) {
    auto contents = read_all(path);

    auto params = parameters(model);
    if (contents.tensors.size() != params.size()) {
        throw FormatError("checkpoint '" + path + "' holds " +
                          std::to_string(contents.tensors.size()) + " tensors, model has " +
                          std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& record = contents.tensors[i];
        auto& param = params[i];
        if (record.name != param.name) {
            throw FormatError("checkpoint '" + path + "': expected tensor '" + param.name +
                              "', found '" + record.name + "'");
        }
        if (record.shape != param.tensor->shape) {
            throw ShapeError("checkpoint tensor '" + record.name + "' is " +
                             shape_str(record.shape) + ", model expects " +
                             shape_str(param.tensor->shape));
        }
        param.tensor->data = record.values;
    }
    validate_model(model);
    return contents.manifest;
}

CheckpointContents read_checkpoint(const std::string& path) { return read_all(path); }

}  // namespace moevl

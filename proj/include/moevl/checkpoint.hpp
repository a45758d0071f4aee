#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moevl/model.hpp"
#include "moevl/tensor.hpp"

namespace moevl {

// Binary parameter file ("EQCK"): manifest, then the model's tensors in
// canonical parameter order as little-endian 32-bit values. In-memory math
// stays 64-bit; the narrowing happens only here.
struct CheckpointManifest {
    std::uint64_t config_hash = 0;
    std::string provenance;  // which command produced it, e.g. "train stage1"
};

struct TensorRecord {
    std::string name;
    Shape shape;
    std::vector<double> values;  // widened back from the stored 32-bit form
};

struct CheckpointContents {
    CheckpointManifest manifest;
    std::vector<TensorRecord> tensors;
};

void save_checkpoint(ToyModel& model, const CheckpointManifest& manifest,
                     const std::string& path);

// Restores every model tensor by name. The model (adapter sets included) must
// already have the right architecture: a missing or extra tensor is a format
// error, a dimension clash is a shape error naming the tensor.
CheckpointManifest load_checkpoint(ToyModel& model, const std::string& path);

// Raw records for inspection, no model required.
CheckpointContents read_checkpoint(const std::string& path);

}  // namespace moevl

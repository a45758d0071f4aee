#pragma once

#include <string>
#include <vector>

#include "moevl/rng.hpp"
#include "moevl/tensor.hpp"

namespace moevl {

// Low-rank residual on one linear map. With the base weight stored [d_in x
// d_out] for row-vector inputs, the adapter contributes
//
//     (alpha / rank) * (drop(x) * A^T) * B^T
//
// B starts at zero, so a fresh adapter is an exact no-op on the base map.
struct LoraAdapter {
    std::string adapter_name;  // the named set this adapter belongs to
    std::string target;        // parameter name of the base weight it wraps
    int rank = 0;
    double alpha = 0.0;
    double dropout_p = 0.0;
    Tensor a;  // [rank x d_in]
    Tensor b;  // [d_out x rank]
};

LoraAdapter make_adapter(const std::string& adapter_name, const std::string& target, int d_in,
                         int d_out, int rank, double alpha, double dropout_p, Rng& rng);

// (alpha/rank) * A^T B^T, shaped like the base weight.
Tensor lora_delta(const LoraAdapter& adapter);

// base(x) plus the adapter path. Dropout hits only the adapter's input, and
// only when training.
Tensor lora_forward(const Tensor& x, const Tensor& base_w, const LoraAdapter& adapter,
                    bool training, Rng& rng);

// Folds the adapter into a copy of the base weight so plain matmul reproduces
// eval-mode lora_forward.
Tensor lora_merge(const std::string& target_name, const Tensor& base_w,
                  const LoraAdapter& adapter);

// Adapters that train together under one name, typically one per target map.
struct AdapterSet {
    std::string name;
    std::vector<LoraAdapter> adapters;
};

// Holds every named adapter set; at most one is active. Forwards consult
// find_active per target and fall back to the bare base map when nothing is
// selected.
class AdapterRegistry {
public:
    void add_set(AdapterSet set);
    void select(const std::string& name);
    void select_none();

    bool has_active() const { return active_ >= 0; }
    const std::string& active_name() const;
    const LoraAdapter* find_active(const std::string& target) const;
    LoraAdapter* find_active(const std::string& target);

    std::vector<AdapterSet>& sets() { return sets_; }
    const std::vector<AdapterSet>& sets() const { return sets_; }

private:
    std::vector<AdapterSet> sets_;
    int active_ = -1;
};

}  // namespace moevl

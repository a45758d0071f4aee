#include "moevl/lora.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "moevl/errors.hpp"
#include "moevl/ops.hpp"

namespace moevl {

LoraAdapter make_adapter(const std::string& adapter_name, const std::string& target, int d_in,
                         int d_out, int rank, double alpha, double dropout_p, Rng& rng) {
    if (rank <= 0 || rank > std::min(d_in, d_out)) {
        throw ConfigError("adapter rank must lie in [1, min(d_in, d_out)]: rank=" +
                          std::to_string(rank) + " for " + std::to_string(d_in) + "x" +
                          std::to_string(d_out) + " target " + target);
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw ConfigError("adapter dropout must lie in [0, 1), got " +
                          std::to_string(dropout_p));
    }
    LoraAdapter adapter;
    adapter.adapter_name = adapter_name;
    adapter.target = target;
    adapter.rank = rank;
    adapter.alpha = alpha;
    adapter.dropout_p = dropout_p;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    adapter.a = Tensor::uniform({rank, d_in}, rng, -bound, bound);
    adapter.b = Tensor::zeros({d_out, rank});
    return adapter;
}

namespace {

void check_conformance(const Tensor& base_w, const LoraAdapter& adapter) {
    if (base_w.rank() != 2 || adapter.a.rank() != 2 || adapter.b.rank() != 2 ||
        adapter.a.shape[1] != base_w.shape[0] || adapter.b.shape[0] != base_w.shape[1] ||
        adapter.a.shape[0] != adapter.rank || adapter.b.shape[1] != adapter.rank) {
        throw ShapeError("adapter " + adapter.adapter_name + "/" + adapter.target +
                         " does not conform to base " + shape_str(base_w.shape) + ": A " +
                         shape_str(adapter.a.shape) + ", B " + shape_str(adapter.b.shape));
    }
}

}  // namespace

Tensor lora_delta(const LoraAdapter& adapter) {
    const double scale = adapter.alpha / adapter.rank;
    return ops::affine(ops::matmul(ops::transpose(adapter.a), ops::transpose(adapter.b)), scale,
                       0.0);
}

Tensor lora_forward(const Tensor& x, const Tensor& base_w, const LoraAdapter& adapter,
                    bool training, Rng& rng) {
    check_conformance(base_w, adapter);
    Tensor adapter_in = training ? ops::dropout(x, adapter.dropout_p, rng) : x;
    Tensor low = ops::matmul(adapter_in, ops::transpose(adapter.a));
    Tensor up = ops::matmul(low, ops::transpose(adapter.b));
    const double scale = adapter.alpha / adapter.rank;
    return ops::add(ops::matmul(x, base_w), ops::affine(up, scale, 0.0));
}

Tensor lora_merge(const std::string& target_name, const Tensor& base_w,
                  const LoraAdapter& adapter) {
    if (adapter.target != target_name) {
        throw ContractError("adapter " + adapter.adapter_name + " targets " + adapter.target +
                            ", cannot merge into " + target_name);
    }
    check_conformance(base_w, adapter);
    return ops::add(base_w, lora_delta(adapter));
}

void AdapterRegistry::add_set(AdapterSet set) {
    for (const auto& existing : sets_) {
        if (existing.name == set.name) {
            throw ConfigError("adapter set '" + set.name + "' already registered");
        }
    }
    sets_.push_back(std::move(set));
}

void AdapterRegistry::select(const std::string& name) {
    for (std::size_t i = 0; i < sets_.size(); ++i) {
        if (sets_[i].name == name) {
            active_ = static_cast<int>(i);
            return;
        }
    }
    throw LookupError("unknown adapter set '" + name + "'");
}

void AdapterRegistry::select_none() { active_ = -1; }

const std::string& AdapterRegistry::active_name() const {
    if (active_ < 0) {
        static const std::string none;
        return none;
    }
    return sets_[static_cast<std::size_t>(active_)].name;
}

const LoraAdapter* AdapterRegistry::find_active(const std::string& target) const {
    if (active_ < 0) return nullptr;
    for (const auto& adapter : sets_[static_cast<std::size_t>(active_)].adapters) {
        if (adapter.target == target) return &adapter;
    }
    return nullptr;
}

LoraAdapter* AdapterRegistry::find_active(const std::string& target) {
    return const_cast<LoraAdapter*>(std::as_const(*this).find_active(target));
}

}  // namespace moevl

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "moevl/tensor.hpp"

namespace moevl {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double max_rel_err() const;
    // Worst entry name, for diagnostics.
    std::string worst() const;
};

// Compares tape gradients against central finite differences.
//
// loss_fn must rebuild the loss from the current parameter values on every
// call: it is evaluated once under an active tape for the analytic gradients
// and then twice per parameter coordinate (at +/- eps) with no tape. Each
// entry reports max over coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// eps must lie in [1e-8, 1e-4]; a non-finite loss raises a numeric error.
GradCheckReport finite_diff_check(
    const std::function<Tensor()>& loss_fn,
    const std::vector<std::pair<std::string, Tensor*>>& params, double eps = 1e-5);

// Adds a fixed random linear functional of the parameters to a probe loss.
// Deep composite blocks can have coordinates whose true gradient is many
// orders below the loss scale; central differences cannot resolve those
// against double-precision roundoff at any eps in the permitted range. The
// tether bounds every coordinate's gradient away from zero without touching
// the block's own backward contribution. Regenerate with the same seed on
// every loss_fn call so the probe stays a fixed function.
Tensor tether_loss(const Tensor& base,
                   const std::vector<std::pair<std::string, Tensor*>>& params,
                   std::uint64_t seed);

// The block-level sweep behind the grad-check CLI command: for every
// differentiable component (primitive ops, both experts, the gate, all three
// projector variants, a decoder block, the adapter path, and the full model
// with its classification loss) it builds a small randomized instance per
// seed and accumulates the per-block worst relative error.
GradCheckReport standard_grad_checks(int seeds);

}  // namespace moevl

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moevl/model.hpp"

namespace moevl {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.1;
    double eps = 1e-8;
};

// Bias-corrected AdamW with decoupled decay. Moment buffers are keyed by
// parameter name and created on first touch; the step counter is shared
// across all parameters.
class AdamW {
public:
    explicit AdamW(AdamWConfig config = {}) : config_(config) {}

    // Applies one update to every listed parameter from its gradient buffer.
    // Every parameter must carry a finite gradient; decay applies even where
    // the gradient is zero.
    void step(const std::vector<ParamRef>& trainable, double lr);

    std::int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return config_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamWConfig config_;
    std::map<std::string, Moments> state_;
    std::int64_t t_ = 0;
};

// Linear warmup from 0 over ceil(warmup_ratio * total_steps) steps, then
// cosine decay from peak to 0 at total_steps.
double lr_at(std::int64_t step, std::int64_t total_steps, double peak, double warmup_ratio);

}  // namespace moevl

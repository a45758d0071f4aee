#include "moevl/optimizer.hpp"

#include <cmath>

#include "moevl/errors.hpp"

namespace moevl {

void AdamW::step(const std::vector<ParamRef>& trainable, double lr) {
    for (const auto& param : trainable) {
        if (!param.tensor->has_grad()) {
            throw ContractError("parameter " + param.name + " has no gradient buffer");
        }
        for (double g : param.tensor->grad()) {
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in " + param.name);
            }
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (const auto& param : trainable) {
        auto& data = param.tensor->data;
        const auto& grad = param.tensor->grad();
        auto& moments = state_[param.name];
        if (moments.m.empty()) {
            moments.m.assign(data.size(), 0.0);
            moments.v.assign(data.size(), 0.0);
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            moments.m[i] = config_.beta1 * moments.m[i] + (1.0 - config_.beta1) * grad[i];
            moments.v[i] =
                config_.beta2 * moments.v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
            const double m_hat = moments.m[i] / bc1;
            const double v_hat = moments.v[i] / bc2;
            const double theta = data[i];
            data[i] = theta - lr * m_hat / (std::sqrt(v_hat) + config_.eps) -
                      lr * config_.weight_decay * theta;
        }
    }
}

double lr_at(std::int64_t step, std::int64_t total_steps, double peak, double warmup_ratio) {
    if (total_steps <= 0) {
        throw ConfigError("schedule needs total_steps > 0, got " + std::to_string(total_steps));
    }
    if (step < 0 || step > total_steps) {
        throw ContractError("schedule step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
    }
    const auto warmup = static_cast<std::int64_t>(
        std::ceil(warmup_ratio * static_cast<double>(total_steps)));
    if (step == total_steps) return 0.0;
    if (step <= warmup) {
        return peak * static_cast<double>(step) / static_cast<double>(warmup);
    }
    const double progress =
        static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
    return peak * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

}  // namespace moevl

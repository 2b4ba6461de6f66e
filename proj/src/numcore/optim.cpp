// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "sentctx/numcore/optim.hpp"

#include <cmath>

namespace sentctx::num {

Adam::Adam(const ParameterStore& store, AdamConfig config)
    : params_(store.parameters())
    , config_(config)
{
    for (const auto& p : params_) {
        first_.emplace_back(p.tensor.numel(), 0.0);
        second_.emplace_back(p.tensor.numel(), 0.0);
    }
}

auto Adam::current_learning_rate() const -> double
{
    const auto t = static_cast<double>(step_ + 1);
    if (config_.warmup_steps > 0 && step_ < config_.warmup_steps) {
        return config_.learning_rate * t / static_cast<double>(config_.warmup_steps);
    }
    const auto decayed = static_cast<double>(step_ - config_.warmup_steps);
    return config_.learning_rate * std::pow(config_.decay, decayed);
}

auto Adam::step() -> double
{
    double norm_sq = 0.0;
    for (const auto& p : params_) {
        for (const double g : p.tensor.grad()) {
            norm_sq += g * g;
        }
    }
    const double norm = std::sqrt(norm_sq);
    const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm)
        ? config_.clip_norm / norm
        : 1.0;

    const double lr = current_learning_rate();
    ++step_;
    const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor t = params_[k].tensor;
        const auto grad = t.grad();
        if (grad.empty()) {
            continue;
        }
        auto values = t.mutable_values();
        auto& m = first_[k];
        auto& v = second_[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grad[i] * clip;
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            values[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + config_.epsilon);
        }
    }
    return norm;
}

} // namespace sentctx::num

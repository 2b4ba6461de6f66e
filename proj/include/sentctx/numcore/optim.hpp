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

#pragma once

#include "sentctx/numcore/parameter.hpp"

#include <cstddef>
#include <vector>

namespace sentctx::num {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Linear warmup over this many steps, then multiplicative decay per step.
    std::size_t warmup_steps = 0;
    double decay = 1.0;
    // Global gradient-norm clip; <= 0 disables.
    double clip_norm = 1.0;
};

class Adam {
public:
    Adam(const ParameterStore& store, AdamConfig config);

    /// Clips, applies one update from the accumulated gradients and returns
    /// the pre-clip gradient norm. Does not zero the gradients.
    auto step() -> double;

    [[nodiscard]] auto steps_taken() const -> std::size_t { return step_; }
    [[nodiscard]] auto current_learning_rate() const -> double;

private:
    std::vector<Parameter> params_;
    AdamConfig config_;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
    std::size_t step_ = 0;
};

} // namespace sentctx::num

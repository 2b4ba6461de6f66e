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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sentctx::num {

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-4;
    // 0 checks every element.
    std::size_t max_elements_per_parameter = 0;
    std::uint64_t seed = 7;
    // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
    // near-zero gradients from turning rounding noise into large ratios.
    double denominator_floor = 1e-3;
};

struct ParameterGradCheck {
    std::string name;
    std::size_t elements_checked = 0;
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<ParameterGradCheck> parameters;

    [[nodiscard]] auto passed() const -> bool;
    [[nodiscard]] auto max_relative_error() const -> double;
    [[nodiscard]] auto summary() const -> std::string;
};

using Fragment = std::function<Tensor(const Tensor& input)>;

/// Compares the tape gradient of the scalar `fragment(input)` against central
/// finite differences (f(p + h) - f(p - h)) / 2h for (a seeded sample of)
/// every element of every listed parameter. The fragment must be
/// deterministic. Parameter gradients are overwritten.
auto check_gradients(const Fragment& fragment, const Tensor& input,
                     const std::vector<Parameter>& params, const GradCheckOptions& options = {})
    -> GradCheckReport;

} // namespace sentctx::num

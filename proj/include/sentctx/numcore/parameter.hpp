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

#include "sentctx/numcore/ops.hpp"
#include "sentctx/numcore/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace sentctx::num {

struct Parameter {
    std::string name; // e.g. "encoder.block3.ffn.w1"; also the checkpoint key
    Tensor tensor;
};

/// Owns the trainable tensors of one model. Names are unique; insertion
/// order is preserved and defines checkpoint layout.
class ParameterStore {
public:
    /// Registers `init` as a trainable tensor (requires_grad, zero grad).
    auto add(std::string name, Tensor init) -> Tensor;

    [[nodiscard]] auto parameters() const -> const std::vector<Parameter>& { return params_; }
    [[nodiscard]] auto find(const std::string& name) const -> const Parameter*;
    [[nodiscard]] auto contains(const std::string& name) const -> bool
    {
        return find(name) != nullptr;
    }
    [[nodiscard]] auto size() const -> std::size_t { return params_.size(); }
    [[nodiscard]] auto scalar_count() const -> std::size_t;
    /// Scalars held by parameters whose name starts with `prefix`.
    [[nodiscard]] auto scalar_count(std::string_view prefix) const -> std::size_t;
    [[nodiscard]] auto select(std::string_view prefix) const -> std::vector<Parameter>;

    void zero_grad();
    [[nodiscard]] auto grad_norm() const -> double;

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Initializers. All draw from the caller's generator so construction order
// determines values.
auto xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) -> Tensor;
auto normal(Shape shape, double stddev, Rng& rng) -> Tensor;
auto uniform(Shape shape, double low, double high, Rng& rng) -> Tensor;

/// Stable 64-bit seed derived from a base seed and a stream label.
auto derive_seed(std::uint64_t seed, std::string_view stream) -> std::uint64_t;

} // namespace sentctx::num

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

#include "sentctx/encoder/layers.hpp"

#include <iosfwd>

namespace sentctx {

struct GmmAttentionConfig {
    std::size_t num_mixtures = 5;
    double sigma_floor = 1e-4;
    std::size_t hidden_units = 128;
    std::size_t query_dim = 0;
    // Output-bias initialization: mean advance and width at step 0.
    double initial_step = 0.5;
    double initial_sigma = 1.0;

    void validate() const;
};

struct GmmAttentionState {
    Tensor means;  // [1 x K], non-decreasing across steps
    Tensor memory; // [N x d]

    [[nodiscard]] auto num_mixtures() const -> std::size_t { return means.numel(); }
    [[nodiscard]] auto length() const -> std::size_t { return memory.rows(); }
};

struct GmmStepResult {
    Tensor context;         // [1 x d]
    Tensor weights;         // [1 x N]
    Tensor mixture_weights; // [1 x K], softmax
    Tensor deltas;          // [1 x K], softplus >= 0
    Tensor sigmas;          // [1 x K], softplus + floor
    GmmAttentionState state;
};

/// All means start at position 0.
auto init_state(const Tensor& memory, std::size_t num_mixtures) -> GmmAttentionState;

/// Binary state record: K, means, N, d, memory (little-endian u64 / f64).
void write_state(std::ostream& out, const GmmAttentionState& state);
auto read_state(std::istream& in) -> GmmAttentionState;

/// alignment[j] = sum_k w_k * (Phi((j + 1/2 - mu_k) / s_k) - Phi((j - 1/2 - mu_k) / s_k))
/// for j in [0, length): each mixture's Gaussian integrated over unit bins
/// centered on encoder positions. Differentiable in all three inputs.
auto gmm_alignment(const Tensor& mixture_weights, const Tensor& means, const Tensor& sigmas,
                   std::size_t length) -> Tensor;

/// Monotonic location-relative attention: a 2-layer perceptron reads the
/// query and predicts per-mixture (weight, step, width) logits.
class GmmAttention {
public:
    GmmAttention() = default;
    GmmAttention(GmmAttentionConfig config, ParameterStore& store, Rng& rng,
                 const std::string& prefix = "decoder.attention");

    [[nodiscard]] auto step(const GmmAttentionState& state, const Tensor& query) const
        -> GmmStepResult;

    [[nodiscard]] auto config() const -> const GmmAttentionConfig& { return config_; }
    [[nodiscard]] auto hidden() const -> const Linear& { return hidden_; }
    [[nodiscard]] auto projection() const -> const Linear& { return projection_; }

private:
    GmmAttentionConfig config_;
    Linear hidden_;
    Linear projection_;
};

} // namespace sentctx

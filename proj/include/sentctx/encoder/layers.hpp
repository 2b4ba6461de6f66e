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

#include "sentctx/errors.hpp"

#include "sentctx/numcore/ops.hpp"
#include "sentctx/numcore/parameter.hpp"

#include <string>
#include <vector>

// Parameterized building blocks shared by the encoder, the context
// aggregator and the decoder. Each holds handles into a ParameterStore.
namespace sentctx {

using num::ParameterStore;
using num::Rng;
using num::Tensor;

struct Linear {
    Tensor weight; // [in x out]
    Tensor bias;   // [1 x out], undefined when created without bias

    static auto create(ParameterStore& store, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng, bool with_bias = true) -> Linear;
    auto operator()(const Tensor& x) const -> Tensor;
    [[nodiscard]] auto in_dim() const -> std::size_t { return weight.dim(0); }
    [[nodiscard]] auto out_dim() const -> std::size_t { return weight.dim(1); }
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;

    static auto create(ParameterStore& store, const std::string& name, std::size_t dim)
        -> LayerNorm;
    auto operator()(const Tensor& x) const -> Tensor;
};

struct Conv1d {
    Tensor weight; // [K x Cin x Cout]
    Tensor bias;   // [1 x Cout]

    static auto create(ParameterStore& store, const std::string& name, std::size_t kernel,
                       std::size_t in, std::size_t out, Rng& rng) -> Conv1d;
    auto operator()(const Tensor& x) const -> Tensor;
    [[nodiscard]] auto kernel_width() const -> std::size_t { return weight.dim(0); }
};

/// relu(x W1 + b1) W2 + b2
struct FeedForward {
    Linear inner;
    Linear outer;

    static auto create(ParameterStore& store, const std::string& name, std::size_t dim,
                       std::size_t inner_dim, Rng& rng) -> FeedForward;
    auto operator()(const Tensor& x) const -> Tensor;
};

struct AttentionResult {
    Tensor output;               // [queries x d], after the output projection
    std::vector<Tensor> weights; // per head, [queries x memory]
};

/// Scaled dot-product attention over `heads` column slices of width d/heads,
/// scaled by 1/sqrt(d/heads); head outputs are concatenated and projected.
class MultiHeadAttention {
public:
    static auto create(ParameterStore& store, const std::string& name, std::size_t dim,
                       std::size_t heads, Rng& rng) -> MultiHeadAttention;

    auto operator()(const Tensor& queries, const Tensor& memory) const -> AttentionResult;

    [[nodiscard]] auto heads() const -> std::size_t { return heads_; }
    [[nodiscard]] auto dim() const -> std::size_t { return query.in_dim(); }
    [[nodiscard]] auto head_dim() const -> std::size_t { return dim() / heads_; }

    Linear query;
    Linear key;
    Linear value;
    Linear output;

private:
    std::size_t heads_ = 1;
};

/// LSTM cell with fused gate projection [x, h] -> (i, f, g, o).
struct LstmCell {
    Linear gates;

    struct State {
        Tensor hidden; // [1 x units]
        Tensor cell;   // [1 x units]
    };

    static auto create(ParameterStore& store, const std::string& name, std::size_t input,
                       std::size_t units, Rng& rng) -> LstmCell;
    [[nodiscard]] auto units() const -> std::size_t { return gates.out_dim() / 4; }
    [[nodiscard]] auto zero_state() const -> State;
    auto operator()(const Tensor& x, const State& state) const -> State;
};

} // namespace sentctx

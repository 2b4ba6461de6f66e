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

#include "sentctx/numcore/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

// Differentiable primitives. Unless noted, operands are rank-2 [rows x cols]
// (rank-1 reads as one row) and reductions/normalizations act on the last
// axis. Every op throws ShapeError naming itself and the offending shapes, and
// NumericError when its output is not finite.
namespace sentctx::num {

using Rng = std::mt19937_64;

/// a[n x k] * b[k x m], or a * b^T when transpose_b (b is [m x k]).
auto matmul(const Tensor& a, const Tensor& b, bool transpose_b = false) -> Tensor;

// Elementwise; b may also be a single row broadcast over the rows of a.
auto add(const Tensor& a, const Tensor& b) -> Tensor;
auto sub(const Tensor& a, const Tensor& b) -> Tensor;
auto mul(const Tensor& a, const Tensor& b) -> Tensor;
auto scale(const Tensor& a, double factor) -> Tensor;

/// axis 0 stacks rows, axis 1 joins columns.
auto concat(const std::vector<Tensor>& parts, std::size_t axis) -> Tensor;
auto slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t count) -> Tensor;
auto split(const Tensor& x, const std::vector<std::size_t>& sizes, std::size_t axis)
    -> std::vector<Tensor>;
auto reshape(const Tensor& x, Shape shape) -> Tensor;
auto transpose(const Tensor& x) -> Tensor;

/// Same-length 1-D convolution over the row (time) axis, stride 1, zero
/// padding. x is [T x Cin], weight [K x Cin x Cout] with odd K, bias [1 x Cout]
/// (may be undefined).
auto conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) -> Tensor;

/// Mean over rows: [T x d] -> [1 x d].
auto mean_pool(const Tensor& x) -> Tensor;

auto softmax(const Tensor& x) -> Tensor;

inline constexpr double layer_norm_epsilon = 1e-9;

/// Row-wise (x - mean) / sqrt(var + eps) * gain + bias. gain and bias are
/// [1 x d] and may be undefined (no affine).
auto layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                double eps = layer_norm_epsilon) -> Tensor;

auto relu(const Tensor& x) -> Tensor;
auto tanh(const Tensor& x) -> Tensor;
auto sigmoid(const Tensor& x) -> Tensor;
auto softplus(const Tensor& x) -> Tensor;

/// Rows of table [V x d] for each id; a bag of ids sums its rows.
auto embed_lookup(const Tensor& table, std::span<const std::size_t> ids) -> Tensor;
auto embed_lookup(const Tensor& table, std::span<const std::vector<std::size_t>> bags)
    -> Tensor;

/// Inverted dropout. Identity when !enabled or rate == 0.
auto dropout(const Tensor& x, double rate, Rng& rng, bool enabled) -> Tensor;

auto sum(const Tensor& x) -> Tensor;
auto mean(const Tensor& x) -> Tensor;
auto mse_loss(const Tensor& prediction, const Tensor& target) -> Tensor;
/// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
auto bce_with_logits(const Tensor& logits, const Tensor& targets) -> Tensor;

enum class OpKind {
    matmul,
    add,
    concat,
    conv1d,
    mean_pool,
    softmax,
    layer_norm,
    relu,
    tanh,
    sigmoid,
    embed_lookup,
};

auto to_string(OpKind kind) -> std::string_view;
auto all_op_kinds() -> std::span<const OpKind>;

/// Uniform entry point over the primitives above. Operand conventions:
/// matmul {a, b}; add {a, b}; concat {parts...} along columns;
/// conv1d {x, weight, bias}; layer_norm {x, gain, bias}; embed_lookup
/// {table, ids} with ids a tensor of non-negative integral values; the rest
/// take {x}.
auto primitive_forward(OpKind kind, const std::vector<Tensor>& inputs) -> Tensor;

} // namespace sentctx::num

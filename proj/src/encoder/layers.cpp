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

#include "sentctx/encoder/layers.hpp"

#include <cmath>

namespace sentctx {

namespace ops = sentctx::num;

auto Linear::create(ParameterStore& store, const std::string& name, std::size_t in,
                    std::size_t out, Rng& rng, bool with_bias) -> Linear
{
    Linear l;
    l.weight = store.add(name + ".w", num::xavier_uniform({ in, out }, in, out, rng));
    if (with_bias) {
        l.bias = store.add(name + ".b", Tensor({ 1, out }, 0.0));
    }
    return l;
}

auto Linear::operator()(const Tensor& x) const -> Tensor
{
    const Tensor y = ops::matmul(x, weight);
    return bias.defined() ? ops::add(y, bias) : y;
}

auto LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t dim)
    -> LayerNorm
{
    return { store.add(name + ".gain", Tensor({ 1, dim }, 1.0)),
             store.add(name + ".bias", Tensor({ 1, dim }, 0.0)) };
}

auto LayerNorm::operator()(const Tensor& x) const -> Tensor
{
    return ops::layer_norm(x, gain, bias);
}

auto Conv1d::create(ParameterStore& store, const std::string& name, std::size_t kernel,
                    std::size_t in, std::size_t out, Rng& rng) -> Conv1d
{
    if (kernel % 2 == 0) {
        throw ConfigError("conv1d '" + name + "': kernel width must be odd");
    }
    return { store.add(name + ".w",
                       num::xavier_uniform({ kernel, in, out }, kernel * in, kernel * out, rng)),
             store.add(name + ".b", Tensor({ 1, out }, 0.0)) };
}

auto Conv1d::operator()(const Tensor& x) const -> Tensor
{
    return ops::conv1d(x, weight, bias);
}

auto FeedForward::create(ParameterStore& store, const std::string& name, std::size_t dim,
                         std::size_t inner_dim, Rng& rng) -> FeedForward
{
    auto inner = Linear::create(store, name + ".w1", dim, inner_dim, rng);
    auto outer = Linear::create(store, name + ".w2", inner_dim, dim, rng);
    return { inner, outer };
}

auto FeedForward::operator()(const Tensor& x) const -> Tensor
{
    return outer(ops::relu(inner(x)));
}

auto MultiHeadAttention::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                std::size_t heads, Rng& rng) -> MultiHeadAttention
{
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError("multi-head attention '" + name + "': model dim "
                          + std::to_string(dim) + " not divisible by "
                          + std::to_string(heads) + " heads");
    }
    MultiHeadAttention mha;
    mha.heads_ = heads;
    mha.query = Linear::create(store, name + ".wq", dim, dim, rng);
    mha.key = Linear::create(store, name + ".wk", dim, dim, rng);
    mha.value = Linear::create(store, name + ".wv", dim, dim, rng);
    mha.output = Linear::create(store, name + ".wo", dim, dim, rng);
    return mha;
}

auto MultiHeadAttention::operator()(const Tensor& queries, const Tensor& memory) const
    -> AttentionResult
{
    const Tensor q = query(queries);
    const Tensor k = key(memory);
    const Tensor v = value(memory);
    const std::size_t dh = head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionResult result;
    std::vector<Tensor> head_outputs;
    for (std::size_t h = 0; h < heads_; ++h) {
        const Tensor qh = ops::slice(q, 1, h * dh, dh);
        const Tensor kh = ops::slice(k, 1, h * dh, dh);
        const Tensor vh = ops::slice(v, 1, h * dh, dh);
        const Tensor weights = ops::softmax(ops::scale(ops::matmul(qh, kh, true), scale));
        head_outputs.push_back(ops::matmul(weights, vh));
        result.weights.push_back(weights);
    }
    const Tensor joined = heads_ == 1 ? head_outputs.front() : ops::concat(head_outputs, 1);
    result.output = output(joined);
    return result;
}

auto LstmCell::create(ParameterStore& store, const std::string& name, std::size_t input,
                      std::size_t units, Rng& rng) -> LstmCell
{
    LstmCell cell { Linear::create(store, name + ".gates", input + units, 4 * units, rng) };
    // forget-gate bias starts at 1
    auto b = cell.gates.bias.mutable_values();
    for (std::size_t i = units; i < 2 * units; ++i) {
        b[i] = 1.0;
    }
    return cell;
}

auto LstmCell::zero_state() const -> State
{
    return { Tensor({ 1, units() }, 0.0), Tensor({ 1, units() }, 0.0) };
}

auto LstmCell::operator()(const Tensor& x, const State& state) const -> State
{
    const std::size_t n = units();
    const Tensor z = gates(ops::concat({ x, state.hidden }, 1));
    const auto parts = ops::split(z, { n, n, n, n }, 1);
    const Tensor input_gate = ops::sigmoid(parts[0]);
    const Tensor forget_gate = ops::sigmoid(parts[1]);
    const Tensor candidate = ops::tanh(parts[2]);
    const Tensor output_gate = ops::sigmoid(parts[3]);
    const Tensor cell = ops::add(ops::mul(forget_gate, state.cell), ops::mul(input_gate, candidate));
    return { ops::mul(output_gate, ops::tanh(cell)), cell };
}

} // namespace sentctx

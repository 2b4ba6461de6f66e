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

#include "sentctx/encoder/encoder.hpp"

#include <cmath>

namespace sentctx {

namespace ops = sentctx::num;

auto EncoderConfig::paper(std::size_t vocab_size) -> EncoderConfig
{
    EncoderConfig c;
    c.vocab_size = vocab_size;
    return c;
}

void EncoderConfig::validate() const
{
    if (vocab_size == 0) {
        throw ConfigError("encoder: vocab_size must be positive");
    }
    if (model_dim == 0 || num_heads == 0 || model_dim % num_heads != 0) {
        throw ConfigError("encoder: model_dim " + std::to_string(model_dim)
                          + " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (prenet_kernel % 2 == 0) {
        throw ConfigError("encoder: prenet kernel width must be odd");
    }
}

Encoder::Encoder(EncoderConfig config, ParameterStore& store, Rng& rng, const std::string& prefix)
    : config_(config)
{
    config_.validate();
    const std::size_t d = config_.model_dim;
    embedding_ = store.add(prefix + ".embedding",
                           num::normal({ config_.vocab_size, d }, 1.0 / std::sqrt(double(d)), rng));
    for (std::size_t i = 0; i < config_.prenet_layers; ++i) {
        const std::string name = prefix + ".prenet" + std::to_string(i);
        prenet_convs_.push_back(Conv1d::create(store, name + ".conv", config_.prenet_kernel, d, d, rng));
        prenet_norms_.push_back(LayerNorm::create(store, name + ".norm", d));
    }
    for (std::size_t l = 0; l < config_.num_blocks; ++l) {
        const std::string name = prefix + ".block" + std::to_string(l);
        blocks_.push_back({
            MultiHeadAttention::create(store, name + ".attn", d, config_.num_heads, rng),
            LayerNorm::create(store, name + ".attn_norm", d),
            FeedForward::create(store, name + ".ffn", d, config_.ffn_inner_dim, rng),
            LayerNorm::create(store, name + ".ffn_norm", d),
        });
    }
}

auto Encoder::embed_and_prenet(const TextSequence& text) const -> Tensor
{
    if (text.empty()) {
        throw InputError("encoder: empty text sequence");
    }
    for (std::size_t pos = 0; pos < text.length(); ++pos) {
        if (text.tokens[pos].empty()) {
            throw InputError("encoder: no symbol at position " + std::to_string(pos));
        }
        for (const std::size_t id : text.tokens[pos]) {
            if (id >= config_.vocab_size) {
                throw InputError("encoder: symbol id " + std::to_string(id) + " at position "
                                 + std::to_string(pos) + " outside vocabulary of "
                                 + std::to_string(config_.vocab_size));
            }
        }
    }
    Tensor x = ops::embed_lookup(embedding_,
                                 std::span<const std::vector<std::size_t>>(text.tokens));
    for (std::size_t i = 0; i < prenet_convs_.size(); ++i) {
        x = ops::relu(prenet_norms_[i](prenet_convs_[i](x)));
    }
    return ops::add(x, sinusoidal_positions(text.length(), config_.model_dim));
}

auto Encoder::self_attention(std::size_t index, const Tensor& previous) const -> AttentionResult
{
    const auto& b = blocks_.at(index);
    AttentionResult r = b.attention(previous, previous);
    r.output = b.attention_norm(ops::add(r.output, previous));
    return r;
}

auto Encoder::feed_forward(std::size_t index, const Tensor& attended) const -> Tensor
{
    const auto& b = blocks_.at(index);
    return b.ffn_norm(ops::add(b.ffn(attended), attended));
}

auto Encoder::block(std::size_t index, const Tensor& previous) const -> Tensor
{
    return feed_forward(index, self_attention(index, previous).output);
}

auto Encoder::encode(const TextSequence& text) const -> EncoderStackOutput
{
    EncoderStackOutput out;
    out.layer_outputs.reserve(blocks_.size() + 1);
    out.layer_outputs.push_back(embed_and_prenet(text));
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        out.layer_outputs.push_back(block(l, out.layer_outputs.back()));
    }
    return out;
}

auto sinusoidal_positions(std::size_t length, std::size_t dim) -> Tensor
{
    std::vector<double> pe(length * dim);
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
            const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
            pe[t * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor({ length, dim }, std::move(pe));
}

} // namespace sentctx

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
#include "sentctx/encoder/text.hpp"

#include <string>
#include <vector>

namespace sentctx {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t num_blocks = 6;
    std::size_t num_heads = 8;
    std::size_t model_dim = 512;
    std::size_t ffn_inner_dim = 2048;
    std::size_t prenet_layers = 3;
    std::size_t prenet_kernel = 5;

    /// 6 blocks, 8 heads, d = 512, FFN 2048.
    static auto paper(std::size_t vocab_size) -> EncoderConfig;
    void validate() const;
};

/// H^0 (prenet output, the input of the first block) followed by H^1..H^L.
struct EncoderStackOutput {
    std::vector<Tensor> layer_outputs;

    [[nodiscard]] auto top() const -> const Tensor& { return layer_outputs.back(); }
    [[nodiscard]] auto num_blocks() const -> std::size_t { return layer_outputs.size() - 1; }
};

struct EncoderBlock {
    MultiHeadAttention attention;
    LayerNorm attention_norm;
    FeedForward ffn;
    LayerNorm ffn_norm;
};

class Encoder {
public:
    Encoder(EncoderConfig config, ParameterStore& store, Rng& rng,
            const std::string& prefix = "encoder");

    /// Summed symbol embeddings -> prenet convs -> + sinusoidal positions.
    [[nodiscard]] auto embed_and_prenet(const TextSequence& text) const -> Tensor;

    /// C = LN(MultiHead(H) + H) for block `index` (0-based).
    [[nodiscard]] auto self_attention(std::size_t index, const Tensor& previous) const
        -> AttentionResult;
    /// H = LN(FFN(C) + C) for block `index`.
    [[nodiscard]] auto feed_forward(std::size_t index, const Tensor& attended) const -> Tensor;
    [[nodiscard]] auto block(std::size_t index, const Tensor& previous) const -> Tensor;

    [[nodiscard]] auto encode(const TextSequence& text) const -> EncoderStackOutput;

    [[nodiscard]] auto config() const -> const EncoderConfig& { return config_; }
    [[nodiscard]] auto block_params(std::size_t index) const -> const EncoderBlock&
    {
        return blocks_.at(index);
    }
    [[nodiscard]] auto embedding() const -> const Tensor& { return embedding_; }

private:
    EncoderConfig config_;
    Tensor embedding_;
    std::vector<Conv1d> prenet_convs_;
    std::vector<LayerNorm> prenet_norms_;
    std::vector<EncoderBlock> blocks_;
};

/// PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(...).
auto sinusoidal_positions(std::size_t length, std::size_t dim) -> Tensor;

} // namespace sentctx

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

#include "sentctx/encoder/encoder.hpp"
#include "sentctx/encoder/layers.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sentctx {

/// none = plain SAN encoder (SA), direct = concatenation (SA-DA),
/// weighted = attention over layers (SA-WA).
enum class AggregationMode { none, direct, weighted };

auto to_string(AggregationMode mode) -> std::string_view;
auto parse_aggregation_mode(std::string_view text) -> AggregationMode;
auto system_name(AggregationMode mode) -> std::string_view;

struct ContextConfig {
    AggregationMode mode = AggregationMode::weighted;
    std::size_t model_dim = 512;
    std::size_t num_blocks = 6; // L; contexts are g^0..g^L
    std::size_t conv_kernel = 3;
    std::size_t attention_heads = 8;
    std::size_t ffn_inner_dim = 2048;

    void validate() const;
    [[nodiscard]] auto num_contexts() const -> std::size_t { return num_blocks + 1; }
    /// g^0..g^L plus a second copy of g^L.
    [[nodiscard]] auto memory_slots() const -> std::size_t { return num_blocks + 2; }
};

/// g^0..g^L, each [1 x d].
struct LayerContextSet {
    std::vector<Tensor> contexts;
};

struct SentenceContext {
    AggregationMode mode = AggregationMode::none;
    std::optional<Tensor> g; // [1 x d]; absent for mode none
    // weighted only: per head, [slots x slots] self-attention over the layer
    // memory. The last row is the distribution used for g.
    std::vector<Tensor> head_weights;
};

class ContextAggregator {
public:
    ContextAggregator(ContextConfig config, ParameterStore& store, Rng& rng,
                      const std::string& prefix = "context");

    /// g^l = MeanPool(Conv1d_l(H^l)).
    [[nodiscard]] auto extract_layer_context(const Tensor& layer_output, std::size_t layer) const
        -> Tensor;
    [[nodiscard]] auto extract(const EncoderStackOutput& stack) const -> LayerContextSet;

    /// C_g = LN(W [g^0; ...; g^L] + g^L), then g = LN(FFN(C_g) + C_g).
    [[nodiscard]] auto direct_aggregate(const LayerContextSet& set) const -> SentenceContext;
    /// C_g = LN(MultiHead over {g^0..g^L, g^L} read at g^L + g^L), then the
    /// same FFN stage.
    [[nodiscard]] auto weighted_aggregate(const LayerContextSet& set) const -> SentenceContext;
    [[nodiscard]] auto aggregate(const LayerContextSet& set) const -> SentenceContext;

    /// [H, g broadcast] W_f + b_f, or H unchanged for mode none.
    [[nodiscard]] auto fuse(const Tensor& encoder_top, const SentenceContext& ctx) const -> Tensor;

    /// extract -> aggregate -> fuse.
    [[nodiscard]] auto apply(const EncoderStackOutput& stack) const -> Tensor;

    [[nodiscard]] auto config() const -> const ContextConfig& { return config_; }
    [[nodiscard]] auto extractor(std::size_t layer) const -> const Conv1d&
    {
        return extractors_.at(layer);
    }
    [[nodiscard]] auto concat_projection() const -> const Linear& { return concat_projection_; }
    [[nodiscard]] auto layer_attention() const -> const MultiHeadAttention& { return layer_attention_; }
    [[nodiscard]] auto aggregate_norm() const -> const LayerNorm& { return aggregate_norm_; }
    [[nodiscard]] auto ffn() const -> const FeedForward& { return ffn_; }
    [[nodiscard]] auto ffn_norm() const -> const LayerNorm& { return ffn_norm_; }
    [[nodiscard]] auto fusion() const -> const Linear& { return fusion_; }

private:
    void check_set(const LayerContextSet& set) const;
    [[nodiscard]] auto finish(const Tensor& combined, const Tensor& top) const -> Tensor;

    ContextConfig config_;
    std::vector<Conv1d> extractors_;
    Linear concat_projection_;
    MultiHeadAttention layer_attention_;
    LayerNorm aggregate_norm_;
    FeedForward ffn_;
    LayerNorm ffn_norm_;
    Linear fusion_;
};

} // namespace sentctx

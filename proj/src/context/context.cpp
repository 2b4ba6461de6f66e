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

#include "sentctx/context/context.hpp"

namespace sentctx {

namespace ops = sentctx::num;

auto to_string(AggregationMode mode) -> std::string_view
{
    switch (mode) {
    case AggregationMode::none:
        return "none";
    case AggregationMode::direct:
        return "direct";
    case AggregationMode::weighted:
        return "weighted";
    }
    return "none";
}

auto parse_aggregation_mode(std::string_view text) -> AggregationMode
{
    if (text == "none") {
        return AggregationMode::none;
    }
    if (text == "direct") {
        return AggregationMode::direct;
    }
    if (text == "weighted") {
        return AggregationMode::weighted;
    }
    throw ConfigError("unknown aggregation mode '" + std::string(text)
                      + "' (expected none|direct|weighted)");
}

auto system_name(AggregationMode mode) -> std::string_view
{
    switch (mode) {
    case AggregationMode::none:
        return "SA";
    case AggregationMode::direct:
        return "SA-DA";
    case AggregationMode::weighted:
        return "SA-WA";
    }
    return "SA";
}

void ContextConfig::validate() const
{
    if (model_dim == 0) {
        throw ConfigError("context: model_dim must be positive");
    }
    if (conv_kernel % 2 == 0) {
        throw ConfigError("context: conv kernel width must be odd");
    }
    if (mode == AggregationMode::weighted
        && (attention_heads == 0 || model_dim % attention_heads != 0)) {
        throw ConfigError("context: model_dim not divisible by aggregation heads");
    }
}

ContextAggregator::ContextAggregator(ContextConfig config, ParameterStore& store, Rng& rng,
                                     const std::string& prefix)
    : config_(config)
{
    config_.validate();
    if (config_.mode == AggregationMode::none) {
        return;
    }
    const std::size_t d = config_.model_dim;
    for (std::size_t l = 0; l < config_.num_contexts(); ++l) {
        extractors_.push_back(Conv1d::create(store, prefix + ".extract" + std::to_string(l),
                                             config_.conv_kernel, d, d, rng));
    }
    if (config_.mode == AggregationMode::direct) {
        concat_projection_ = Linear::create(store, prefix + ".direct.proj",
                                            config_.num_contexts() * d, d, rng);
    } else {
        layer_attention_ = MultiHeadAttention::create(store, prefix + ".weighted.attn", d,
                                                      config_.attention_heads, rng);
    }
    aggregate_norm_ = LayerNorm::create(store, prefix + ".agg_norm", d);
    ffn_ = FeedForward::create(store, prefix + ".ffn", d, config_.ffn_inner_dim, rng);
    ffn_norm_ = LayerNorm::create(store, prefix + ".ffn_norm", d);
    fusion_ = Linear::create(store, prefix + ".fuse", 2 * d, d, rng);
}

auto ContextAggregator::extract_layer_context(const Tensor& layer_output, std::size_t layer) const
    -> Tensor
{
    if (config_.mode == AggregationMode::none) {
        throw ConfigError("context: no extractors in mode none");
    }
    if (layer_output.rows() == 0 || layer_output.numel() == 0) {
        throw InputError("context: empty sequence at layer " + std::to_string(layer));
    }
    return ops::mean_pool(extractors_.at(layer)(layer_output));
}

auto ContextAggregator::extract(const EncoderStackOutput& stack) const -> LayerContextSet
{
    if (stack.layer_outputs.size() != config_.num_contexts()) {
        throw num::ShapeError("context: expected " + std::to_string(config_.num_contexts())
                              + " layer outputs, got "
                              + std::to_string(stack.layer_outputs.size()));
    }
    LayerContextSet set;
    for (std::size_t l = 0; l < stack.layer_outputs.size(); ++l) {
        set.contexts.push_back(extract_layer_context(stack.layer_outputs[l], l));
    }
    return set;
}

void ContextAggregator::check_set(const LayerContextSet& set) const
{
    if (set.contexts.size() != config_.num_contexts()) {
        throw num::ShapeError("context: expected " + std::to_string(config_.num_contexts())
                              + " layer contexts, got " + std::to_string(set.contexts.size()));
    }
    for (const auto& g : set.contexts) {
        if (g.numel() != config_.model_dim) {
            throw num::ShapeError("context: layer context " + num::to_string(g.shape())
                                  + " is not " + std::to_string(config_.model_dim) + "-dim");
        }
    }
}

auto ContextAggregator::finish(const Tensor& combined, const Tensor& top) const -> Tensor
{
    const Tensor c = aggregate_norm_(ops::add(combined, top));
    return ffn_norm_(ops::add(ffn_(c), c));
}

auto ContextAggregator::direct_aggregate(const LayerContextSet& set) const -> SentenceContext
{
    if (config_.mode != AggregationMode::direct) {
        throw ConfigError("context: aggregator was built for mode "
                          + std::string(to_string(config_.mode)));
    }
    check_set(set);
    const Tensor& top = set.contexts.back();
    const Tensor joined = ops::concat(set.contexts, 1);
    return { AggregationMode::direct, finish(concat_projection_(joined), top), {} };
}

auto ContextAggregator::weighted_aggregate(const LayerContextSet& set) const -> SentenceContext
{
    if (config_.mode != AggregationMode::weighted) {
        throw ConfigError("context: aggregator was built for mode "
                          + std::string(to_string(config_.mode)));
    }
    check_set(set);
    const Tensor& top = set.contexts.back();
    std::vector<Tensor> slots = set.contexts;
    slots.push_back(top);
    const Tensor memory = ops::concat(slots, 0);
    AttentionResult attended = layer_attention_(memory, memory);
    // the final slot's query is g^L
    const Tensor read = ops::slice(attended.output, 0, slots.size() - 1, 1);
    return { AggregationMode::weighted, finish(read, top), std::move(attended.weights) };
}

auto ContextAggregator::aggregate(const LayerContextSet& set) const -> SentenceContext
{
    switch (config_.mode) {
    case AggregationMode::direct:
        return direct_aggregate(set);
    case AggregationMode::weighted:
        return weighted_aggregate(set);
    case AggregationMode::none:
        break;
    }
    return {};
}

auto ContextAggregator::fuse(const Tensor& encoder_top, const SentenceContext& ctx) const -> Tensor
{
    if (ctx.mode == AggregationMode::none) {
        return encoder_top;
    }
    if (!ctx.g) {
        throw InputError("context: sentence vector missing for mode "
                         + std::string(to_string(ctx.mode)));
    }
    if (config_.mode == AggregationMode::none) {
        throw ConfigError("context: no fusion projection in mode none");
    }
    const std::size_t d = config_.model_dim;
    if (encoder_top.cols() != d || ctx.g->numel() != d) {
        throw num::ShapeError("context: fuse expects [T x " + std::to_string(d) + "] and a "
                              + std::to_string(d) + "-dim context, got "
                              + num::to_string(encoder_top.shape()) + " and "
                              + num::to_string(ctx.g->shape()));
    }
    const Tensor g_row = ops::reshape(*ctx.g, { 1, d });
    const Tensor broadcast = ops::add(Tensor({ encoder_top.rows(), d }, 0.0), g_row);
    return fusion_(ops::concat({ encoder_top, broadcast }, 1));
}

auto ContextAggregator::apply(const EncoderStackOutput& stack) const -> Tensor
{
    if (config_.mode == AggregationMode::none) {
        return stack.top();
    }
    return fuse(stack.top(), aggregate(extract(stack)));
}

} // namespace sentctx

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


#include "sentctx/decoder/decoder.hpp"

#include <cmath>

namespace sentctx {

namespace ops = sentctx::num;

auto DecoderConfig::paper(std::size_t memory_dim) -> DecoderConfig
{
    DecoderConfig c;
    c.memory_dim = memory_dim;
    return c;
}

auto DecoderConfig::toy(std::size_t memory_dim) -> DecoderConfig
{
    DecoderConfig c;
    c.memory_dim = memory_dim;
    c.prenet_dims = { 64, 64 };
    c.recurrent_dims = { 128, 128 };
    c.reduction_factor = 2;
    c.postnet_channels = 64;
    c.attention_hidden = 64;
    c.max_steps = 200;
    return c;
}

void DecoderConfig::validate() const
{
    if (memory_dim == 0 || num_mels == 0) {
        throw ConfigError("decoder: memory_dim and num_mels must be positive");
    }
    if (prenet_dims[0] == 0 || prenet_dims[1] == 0 || recurrent_dims[0] == 0
        || recurrent_dims[1] == 0) {
        throw ConfigError("decoder: layer widths must be positive");
    }
    if (reduction_factor == 0) {
        throw ConfigError("decoder: reduction factor must be at least 1");
    }
    if (postnet_layers < 2 || postnet_kernel % 2 == 0) {
        throw ConfigError("decoder: postnet needs >= 2 layers with an odd kernel");
    }
    if (!(stop_threshold > 0.0 && stop_threshold < 1.0)) {
        throw ConfigError("decoder: stop threshold must lie in (0, 1)");
    }
    if (max_steps == 0) {
        throw ConfigError("decoder: max_steps must be positive");
    }
}

auto DecoderConfig::attention_config() const -> GmmAttentionConfig
{
    GmmAttentionConfig a;
    a.num_mixtures = attention_mixtures;
    a.hidden_units = attention_hidden;
    a.query_dim = recurrent_dims[0];
    return a;
}

Decoder::Decoder(DecoderConfig config, ParameterStore& store, Rng& rng, const std::string& prefix)
    : config_(config)
{
    config_.validate();
    const std::size_t mels = config_.num_mels;
    const std::size_t d = config_.memory_dim;
    const std::size_t r = config_.reduction_factor;
    prenet_[0] = Linear::create(store, prefix + ".prenet0", mels, config_.prenet_dims[0], rng);
    prenet_[1] = Linear::create(store, prefix + ".prenet1", config_.prenet_dims[0],
                                config_.prenet_dims[1], rng);
    attention_rnn_ = LstmCell::create(store, prefix + ".attention_rnn",
                                      config_.prenet_dims[1] + d, config_.recurrent_dims[0], rng);
    attention_ = GmmAttention(config_.attention_config(), store, rng, prefix + ".attention");
    decoder_rnn_ = LstmCell::create(store, prefix + ".decoder_rnn", config_.recurrent_dims[0] + d,
                                    config_.recurrent_dims[1], rng);
    const std::size_t head_in = config_.recurrent_dims[1] + d;
    frame_projection_ = Linear::create(store, prefix + ".frame_proj", head_in, r * mels, rng);
    stop_projection_ = Linear::create(store, prefix + ".stop_proj", head_in, r, rng);
    for (std::size_t i = 0; i < config_.postnet_layers; ++i) {
        const std::size_t in = i == 0 ? mels : config_.postnet_channels;
        const std::size_t out = i + 1 == config_.postnet_layers ? mels : config_.postnet_channels;
        postnet_.push_back(Conv1d::create(store, prefix + ".postnet" + std::to_string(i),
                                          config_.postnet_kernel, in, out, rng));
    }
}

void Decoder::check_memory(const Tensor& memory) const
{
    if (!memory.defined() || memory.rows() == 0 || memory.numel() == 0) {
        throw InputError("decoder: empty encoder memory");
    }
    if (memory.cols() != config_.memory_dim) {
        throw num::ShapeError("decoder: memory " + num::to_string(memory.shape())
                              + " does not have " + std::to_string(config_.memory_dim)
                              + " columns");
    }
}

auto Decoder::prenet(const Tensor& frames) const -> Tensor
{
    return ops::relu(prenet_[1](ops::relu(prenet_[0](frames))));
}

auto Decoder::initial_state(const Tensor& memory) const -> StepState
{
    check_memory(memory);
    return { attention_rnn_.zero_state(), decoder_rnn_.zero_state(),
             Tensor({ 1, config_.memory_dim }, 0.0),
             init_state(memory, config_.attention_mixtures) };
}

auto Decoder::step(const StepState& state, const Tensor& prenet_out) const -> StepOutput
{
    StepOutput out;
    out.state.attention_rnn
        = attention_rnn_(ops::concat({ prenet_out, state.context }, 1), state.attention_rnn);
    const auto attended = attention_.step(state.attention, out.state.attention_rnn.hidden);
    out.state.context = attended.context;
    out.state.attention = attended.state;
    out.alignment = attended.weights;
    out.state.decoder_rnn = decoder_rnn_(
        ops::concat({ out.state.attention_rnn.hidden, attended.context }, 1), state.decoder_rnn);
    const Tensor head = ops::concat({ out.state.decoder_rnn.hidden, attended.context }, 1);
    const std::size_t r = config_.reduction_factor;
    out.frames = ops::reshape(frame_projection_(head), { r, config_.num_mels });
    out.stop_logits = ops::reshape(stop_projection_(head), { r, 1 });
    return out;
}

auto Decoder::postnet(const Tensor& pre_mel) const -> Tensor
{
    Tensor x = pre_mel;
    for (std::size_t i = 0; i < postnet_.size(); ++i) {
        x = postnet_[i](x);
        if (i + 1 < postnet_.size()) {
            x = ops::tanh(x);
        }
    }
    return ops::add(pre_mel, x);
}

auto Decoder::teacher_forced_forward(const Tensor& memory, const Tensor& target) const
    -> DecoderOutput
{
    check_memory(memory);
    if (!target.defined() || target.rows() == 0) {
        throw InputError("decoder: empty target");
    }
    if (target.cols() != config_.num_mels) {
        throw num::ShapeError("decoder: target " + num::to_string(target.shape()) + " is not "
                              + std::to_string(config_.num_mels) + "-band");
    }
    const std::size_t frames = target.rows();
    const std::size_t r = config_.reduction_factor;
    const std::size_t steps = (frames + r - 1) / r;

    // all step inputs are known up front, so the prenet runs once
    std::vector<Tensor> inputs { Tensor({ 1, config_.num_mels }, 0.0) };
    for (std::size_t s = 1; s < steps; ++s) {
        inputs.push_back(ops::slice(target, 0, s * r - 1, 1));
    }
    const Tensor prenet_all = prenet(ops::concat(inputs, 0));

    DecoderOutput out;
    std::vector<Tensor> heads;
    StepState state = initial_state(memory);
    for (std::size_t s = 0; s < steps; ++s) {
        auto so = step(state, ops::slice(prenet_all, 0, s, 1));
        heads.push_back(so.frames);
        out.alignments.push_back(so.alignment);
        out.means.emplace_back(so.state.attention.means.values().begin(),
                               so.state.attention.means.values().end());
        out.stop_logits = out.stop_logits.defined()
            ? ops::concat({ out.stop_logits, so.stop_logits }, 0)
            : so.stop_logits;
        state = std::move(so.state);
    }
    out.steps = steps;
    Tensor pre = heads.size() == 1 ? heads.front() : ops::concat(heads, 0);
    if (pre.rows() != frames) {
        pre = ops::slice(pre, 0, 0, frames);
        out.stop_logits = ops::slice(out.stop_logits, 0, 0, frames);
    }
    out.pre_mel = pre;
    out.post_mel = postnet(pre);
    return out;
}

auto Decoder::infer(const Tensor& memory) const -> InferenceResult
{
    return infer(memory, config_.max_steps);
}

auto Decoder::infer(const Tensor& memory, std::size_t max_steps) const -> InferenceResult
{
    check_memory(memory);
    const std::size_t r = config_.reduction_factor;
    InferenceResult result;
    DecoderOutput& out = result.output;
    std::vector<Tensor> groups;
    std::vector<Tensor> stops;
    StepState state = initial_state(memory);
    Tensor last({ 1, config_.num_mels }, 0.0);
    for (std::size_t s = 0; s < max_steps; ++s) {
        auto so = step(state, prenet(last));
        groups.push_back(so.frames);
        stops.push_back(so.stop_logits);
        out.alignments.push_back(so.alignment);
        out.means.emplace_back(so.state.attention.means.values().begin(),
                               so.state.attention.means.values().end());
        last = ops::slice(so.frames, 0, r - 1, 1);
        state = std::move(so.state);
        ++out.steps;
        bool fire = false;
        for (const double logit : so.stop_logits.values()) {
            fire = fire || 1.0 / (1.0 + std::exp(-logit)) > config_.stop_threshold;
        }
        if (fire) {
            result.stopped = true;
            break;
        }
    }
    out.pre_mel = groups.size() == 1 ? groups.front() : ops::concat(groups, 0);
    out.stop_logits = stops.size() == 1 ? stops.front() : ops::concat(stops, 0);
    out.post_mel = postnet(out.pre_mel);
    return result;
}

auto Decoder::loss(const DecoderOutput& output, const Tensor& target) const -> DecoderLoss
{
    if (output.pre_mel.shape() != target.shape()) {
        throw num::ShapeError("decoder loss: prediction " + num::to_string(output.pre_mel.shape())
                              + " vs target " + num::to_string(target.shape()));
    }
    const std::size_t frames = target.rows();
    Tensor stop_target({ frames, 1 }, 0.0);
    stop_target.mutable_values()[frames - 1] = 1.0;
    const Tensor pre = ops::mse_loss(output.pre_mel, target);
    const Tensor post = ops::mse_loss(output.post_mel, target);
    const Tensor stop = ops::bce_with_logits(output.stop_logits, stop_target);
    DecoderLoss l;
    l.pre_mel = pre.item();
    l.post_mel = post.item();
    l.stop = stop.item();
    l.total = ops::add(ops::scale(ops::add(pre, post), config_.mel_loss_weight),
                       ops::scale(stop, config_.stop_loss_weight));
    return l;
}

} // namespace sentctx

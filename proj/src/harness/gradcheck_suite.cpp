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


#include "sentctx/harness/gradcheck_suite.hpp"

#include "sentctx/context/context.hpp"
#include "sentctx/decoder/decoder.hpp"
#include "sentctx/encoder/encoder.hpp"

namespace sentctx::harness {

namespace ops = sentctx::num;

namespace {

auto readout(const Tensor& y, std::uint64_t seed) -> Tensor
{
    Rng rng(seed);
    return ops::sum(ops::mul(y, num::normal(y.shape(), 1.0, rng)));
}

/// Zero-initialized biases can leave ReLU inputs exactly at the kink, where
/// central differences are meaningless.
void shift_biases(const ParameterStore& store, std::uint64_t seed)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> d(0.1, 0.3);
    for (const auto& p : store.parameters()) {
        if (p.name.ends_with(".b")) {
            for (auto& v : p.tensor.mutable_values()) {
                v += d(rng);
            }
        }
    }
}

auto encoder_block(const num::GradCheckOptions& options) -> num::GradCheckReport
{
    EncoderConfig c;
    c.vocab_size = 10;
    c.num_blocks = 1;
    c.num_heads = 2;
    c.model_dim = 8;
    c.ffn_inner_dim = 16;
    ParameterStore store;
    Rng rng(13);
    const Encoder enc(c, store, rng);
    shift_biases(store, 14);
    Rng noise(16);
    const Tensor x = num::normal({ 3, 8 }, 1.0, noise);
    return num::check_gradients([&](const Tensor& in) { return readout(enc.block(0, in), 15); },
                                x, store.select("encoder.block0"), options);
}

auto aggregation(AggregationMode mode, const num::GradCheckOptions& options)
    -> num::GradCheckReport
{
    ContextConfig c;
    c.mode = mode;
    c.model_dim = 4;
    c.num_blocks = 2;
    c.attention_heads = 2;
    c.ffn_inner_dim = 8;
    ParameterStore store;
    Rng rng(27);
    const ContextAggregator agg(c, store, rng);
    shift_biases(store, 26);
    Rng noise(28);
    const Tensor stacked = num::normal({ 3, 4 }, 1.0, noise);
    const Tensor top = num::normal({ 2, 4 }, 1.0, noise);
    return num::check_gradients(
        [&](const Tensor& in) {
            LayerContextSet set;
            for (std::size_t r = 0; r < in.rows(); ++r) {
                set.contexts.push_back(ops::slice(in, 0, r, 1));
            }
            return readout(agg.fuse(top, agg.aggregate(set)), 29);
        },
        stacked, store.select("context"), options);
}

auto attention_rollout(const num::GradCheckOptions& options) -> num::GradCheckReport
{
    GmmAttentionConfig c;
    c.num_mixtures = 5;
    c.query_dim = 6;
    c.hidden_units = 16;
    ParameterStore store;
    Rng rng(12);
    const GmmAttention att(c, store, rng);
    Rng data(13);
    const auto state = init_state(num::normal({ 8, 3 }, 1.0, data), 5);
    const Tensor q1 = num::normal({ 1, 6 }, 1.0, data);
    const Tensor q2 = num::normal({ 1, 6 }, 1.0, data);
    const Tensor w = num::normal({ 1, 3 }, 1.0, data);
    return num::check_gradients(
        [&](const Tensor& q) {
            const auto r1 = att.step(state, q);
            const auto r2 = att.step(r1.state, q2);
            return ops::sum(ops::mul(ops::add(r1.context, r2.context), w));
        },
        q1, store.parameters(), options);
}

auto decoder_step(const num::GradCheckOptions& options) -> num::GradCheckReport
{
    DecoderConfig c;
    c.memory_dim = 4;
    c.num_mels = 3;
    c.prenet_dims = { 4, 4 };
    c.recurrent_dims = { 5, 5 };
    c.reduction_factor = 2;
    c.postnet_layers = 2;
    c.postnet_channels = 3;
    c.postnet_kernel = 3;
    c.attention_mixtures = 2;
    c.attention_hidden = 3;
    ParameterStore store;
    Rng rng(15);
    const Decoder dec(c, store, rng);
    shift_biases(store, 17);
    Rng data(16);
    const Tensor memory = num::normal({ 4, 4 }, 1.0, data);
    const Tensor frame = num::normal({ 1, 3 }, 1.0, data);
    return num::check_gradients(
        [&](const Tensor& m) {
            const auto out = dec.step(dec.initial_state(m), dec.prenet(frame));
            return ops::add(readout(dec.postnet(out.frames), 18), readout(out.stop_logits, 19));
        },
        memory, store.parameters(), options);
}

} // namespace

auto run_module_gradchecks(const num::GradCheckOptions& options) -> std::vector<ModuleGradCheck>
{
    return {
        { "encoder block", encoder_block(options) },
        { "direct aggregation", aggregation(AggregationMode::direct, options) },
        { "weighted aggregation", aggregation(AggregationMode::weighted, options) },
        { "gmm attention step", attention_rollout(options) },
        { "decoder step", decoder_step(options) },
    };
}

} // namespace sentctx::harness

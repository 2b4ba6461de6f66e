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

#include "sentctx/attention/gmm_attention.hpp"
#include "sentctx/encoder/layers.hpp"

#include <array>
#include <string>
#include <vector>

namespace sentctx {

struct DecoderConfig {
    std::size_t memory_dim = 512;
    std::size_t num_mels = 80;
    std::array<std::size_t, 2> prenet_dims { 256, 256 };
    std::array<std::size_t, 2> recurrent_dims { 1024, 1024 };
    std::size_t reduction_factor = 1;
    std::size_t postnet_layers = 5;
    std::size_t postnet_channels = 512;
    std::size_t postnet_kernel = 5;
    double stop_threshold = 0.5;
    std::size_t max_steps = 1000;
    std::size_t attention_mixtures = 5;
    std::size_t attention_hidden = 128;
    double mel_loss_weight = 1.0;
    double stop_loss_weight = 1.0;

    static auto paper(std::size_t memory_dim) -> DecoderConfig;
    static auto toy(std::size_t memory_dim) -> DecoderConfig;
    void validate() const;
    [[nodiscard]] auto attention_config() const -> GmmAttentionConfig;
};

struct DecoderOutput {
    Tensor pre_mel;     // [T x mels]
    Tensor post_mel;    // [T x mels]
    Tensor stop_logits; // [T x 1]
    std::vector<Tensor> alignments;        // per decoder step, [1 x N]
    std::vector<std::vector<double>> means; // per decoder step, K values
    std::size_t steps = 0;
};

struct DecoderLoss {
    Tensor total;
    double pre_mel = 0.0;
    double post_mel = 0.0;
    double stop = 0.0;

    /// pre + post mel error, the quantity tracked for convergence.
    [[nodiscard]] auto mel() const -> double { return pre_mel + post_mel; }
};

struct InferenceResult {
    DecoderOutput output;
    bool stopped = false; // false when max_steps was reached
};

/// Autoregressive mel decoder: prenet -> attention LSTM -> GMM attention ->
/// decoder LSTM -> frame and stop projections, then a residual conv postnet.
class Decoder {
public:
    Decoder(DecoderConfig config, ParameterStore& store, Rng& rng,
            const std::string& prefix = "decoder");

    /// One step per group of `reduction_factor` target frames; the input of
    /// step s is target frame s*r - 1 (zeros for s = 0). Outputs are cut to
    /// the target length.
    [[nodiscard]] auto teacher_forced_forward(const Tensor& memory, const Tensor& target) const
        -> DecoderOutput;

    /// Feeds back its own last predicted frame; stops after the first step
    /// whose stop probability exceeds the threshold, or after max_steps.
    [[nodiscard]] auto infer(const Tensor& memory) const -> InferenceResult;
    [[nodiscard]] auto infer(const Tensor& memory, std::size_t max_steps) const
        -> InferenceResult;

    /// mel_w * (MSE(pre) + MSE(post)) + stop_w * BCE(stop), with the stop
    /// target 1 on the final frame only.
    [[nodiscard]] auto loss(const DecoderOutput& output, const Tensor& target) const
        -> DecoderLoss;

    /// post = pre + postnet(pre).
    [[nodiscard]] auto postnet(const Tensor& pre_mel) const -> Tensor;

    [[nodiscard]] auto config() const -> const DecoderConfig& { return config_; }
    [[nodiscard]] auto attention() const -> const GmmAttention& { return attention_; }
    [[nodiscard]] auto stop_projection() const -> const Linear& { return stop_projection_; }
    [[nodiscard]] auto frame_projection() const -> const Linear& { return frame_projection_; }

    struct StepState {
        LstmCell::State attention_rnn;
        LstmCell::State decoder_rnn;
        Tensor context; // [1 x memory_dim]
        GmmAttentionState attention;
    };

    struct StepOutput {
        Tensor frames;      // [r x mels]
        Tensor stop_logits; // [r x 1]
        Tensor alignment;   // [1 x N]
        StepState state;
    };

    [[nodiscard]] auto initial_state(const Tensor& memory) const -> StepState;
    /// One decoder step from an already-prenet'ed input row.
    [[nodiscard]] auto step(const StepState& state, const Tensor& prenet_out) const -> StepOutput;
    [[nodiscard]] auto prenet(const Tensor& frames) const -> Tensor;

private:
    void check_memory(const Tensor& memory) const;

    DecoderConfig config_;
    std::array<Linear, 2> prenet_;
    LstmCell attention_rnn_;
    GmmAttention attention_;
    LstmCell decoder_rnn_;
    Linear frame_projection_;
    Linear stop_projection_;
    std::vector<Conv1d> postnet_;
};

} // namespace sentctx

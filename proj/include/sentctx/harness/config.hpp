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

#include "sentctx/context/context.hpp"
#include "sentctx/decoder/decoder.hpp"
#include "sentctx/encoder/encoder.hpp"
#include "sentctx/features/mel.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace sentctx::harness {

enum class Preset { toy, paper };

auto to_string(Preset p) -> std::string;
auto parse_preset(const std::string& text) -> Preset;

/// Ordered `key -> value` pairs from `key = value` lines; `#` starts a
/// comment, blank lines are ignored.
using KeyValues = std::map<std::string, std::string>;

auto parse_key_values(const std::string& text, const std::string& origin = "<string>")
    -> KeyValues;
auto read_key_values(const std::filesystem::path& path) -> KeyValues;
auto format_key_values(const KeyValues& kv) -> std::string;

/// Parses `key=value` (the form used on the command line).
auto parse_override(const std::string& assignment) -> std::pair<std::string, std::string>;

struct TrainingConfig {
    Preset preset = Preset::toy;
    AggregationMode mode = AggregationMode::weighted;
    std::uint64_t seed = 1;
    std::size_t steps = 2000;
    std::size_t batch_size = 1;
    double learning_rate = 1e-3;
    std::size_t warmup_steps = 0;
    double decay = 1.0;
    double clip_norm = 1.0;
    std::size_t checkpoint_every = 500; // 0 keeps only the final checkpoint

    // Model sizes; preset values unless overridden.
    std::size_t model_dim = 64;
    std::size_t num_blocks = 2;
    std::size_t num_heads = 2;
    std::size_t ffn_dim = 128;
    std::size_t reduction_factor = 2;
    std::size_t max_decoder_steps = 200;
    std::size_t num_mels = 80;
    int sample_rate = 22050;

    /// Toy: d = 64, L = 2, 2 heads, FFN 128, Adam 1e-3.
    /// Paper: d = 512, L = 6, 8 heads, FFN 2048, Adam 1e-4 with warmup.
    static auto for_preset(Preset p) -> TrainingConfig;

    /// `preset` is applied first (resetting every other field to the preset
    /// defaults), then the remaining keys in order. Unknown keys are errors.
    static auto from_key_values(const KeyValues& kv) -> TrainingConfig;
    void set(const std::string& key, const std::string& value);
    [[nodiscard]] auto to_key_values() const -> KeyValues;
    void validate() const;
};

struct ModelConfig {
    Preset preset = Preset::toy;
    EncoderConfig encoder;
    ContextConfig context;
    DecoderConfig decoder;
    features::FeatureConfig features;

    static auto from_training(const TrainingConfig& t, std::size_t vocab_size) -> ModelConfig;
    /// Sizes as stored in checkpoints.
    [[nodiscard]] auto to_key_values() const -> KeyValues;
    static auto from_key_values(const KeyValues& kv) -> ModelConfig;
    void validate() const;
};

} // namespace sentctx::harness

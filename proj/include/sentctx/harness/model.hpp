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

#include "sentctx/encoder/text.hpp"
#include "sentctx/features/mel.hpp"
#include "sentctx/harness/config.hpp"

#include <cstdint>
#include <filesystem>

namespace sentctx::harness {

/// Encoder, sentence-context aggregator and decoder over one parameter
/// store. Each submodule draws its initial values from its own seeded
/// stream, so the three aggregation modes share encoder and decoder
/// initializations for a given seed.
class AcousticModel {
public:
    AcousticModel(ModelConfig config, Vocabulary vocab, std::uint64_t seed);

    /// Encoder memory after context fusion, [N x d].
    [[nodiscard]] auto memory(const TextSequence& text) const -> Tensor;

    [[nodiscard]] auto teacher_forced(const TextSequence& text, const Tensor& target) const
        -> DecoderOutput;
    [[nodiscard]] auto loss(const TextSequence& text, const Tensor& target) const -> DecoderLoss;

    [[nodiscard]] auto infer(const TextSequence& text) const -> InferenceResult;
    /// Post-net output of free-running inference as a mel spectrogram.
    [[nodiscard]] auto synthesize(const TextSequence& text) const -> features::MelSpectrogram;

    [[nodiscard]] auto config() const -> const ModelConfig& { return config_; }
    [[nodiscard]] auto vocabulary() const -> const Vocabulary& { return vocab_; }
    [[nodiscard]] auto store() -> ParameterStore& { return store_; }
    [[nodiscard]] auto store() const -> const ParameterStore& { return store_; }
    [[nodiscard]] auto encoder() const -> const Encoder& { return encoder_; }
    [[nodiscard]] auto context() const -> const ContextAggregator& { return context_; }
    [[nodiscard]] auto decoder() const -> const Decoder& { return decoder_; }
    [[nodiscard]] auto seed() const -> std::uint64_t { return seed_; }

private:
    ModelConfig config_;
    Vocabulary vocab_;
    std::uint64_t seed_;
    ParameterStore store_;
    Encoder encoder_;
    ContextAggregator context_;
    Decoder decoder_;
};

auto mel_to_tensor(const features::MelSpectrogram& mel) -> Tensor;
auto tensor_to_mel(const Tensor& frames, const features::FeatureConfig& config)
    -> features::MelSpectrogram;

class CheckpointError : public InputError {
public:
    using InputError::InputError;
};

/// Versioned binary checkpoint: magic, version, the model config and
/// vocabulary as key-value text, an index of name -> (shape, offset), then
/// every parameter as contiguous little-endian f64.
void save_checkpoint(const std::filesystem::path& path, const AcousticModel& model,
                     std::size_t step = 0);

struct LoadedCheckpoint {
    AcousticModel model;
    std::size_t step = 0;
};

auto load_checkpoint(const std::filesystem::path& path) -> LoadedCheckpoint;

inline constexpr std::uint32_t checkpoint_magic = 0x50435453; // "STCP"
inline constexpr std::uint32_t checkpoint_version = 1;

} // namespace sentctx::harness

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


#include "sentctx/harness/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sentctx::harness {

namespace {

auto stream_rng(std::uint64_t seed, std::string_view stream) -> Rng
{
    return Rng(num::derive_seed(seed, stream));
}

template <typename T>
void put(std::ostream& out, T v)
{
    static_assert(std::endian::native == std::endian::little);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
auto get(std::istream& in, const std::string& what) -> T
{
    T v {};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw CheckpointError("checkpoint: truncated while reading " + what);
    }
    return v;
}

void put_string(std::ostream& out, const std::string& s)
{
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

auto get_string(std::istream& in, const std::string& what) -> std::string
{
    const auto n = get<std::uint64_t>(in, what);
    if (n > (1ULL << 30)) {
        throw CheckpointError("checkpoint: implausible length for " + what);
    }
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw CheckpointError("checkpoint: truncated while reading " + what);
    }
    return s;
}

} // namespace

AcousticModel::AcousticModel(ModelConfig config, Vocabulary vocab, std::uint64_t seed)
    : config_(std::move(config))
    , vocab_(std::move(vocab))
    , seed_(seed)
    , encoder_([&] {
        if (vocab_.size() != config_.encoder.vocab_size) {
            throw ConfigError("model: vocabulary has " + std::to_string(vocab_.size())
                              + " symbols, config expects "
                              + std::to_string(config_.encoder.vocab_size));
        }
        config_.validate();
        Rng rng = stream_rng(seed, "encoder");
        return Encoder(config_.encoder, store_, rng);
    }())
    , context_([&] {
        Rng rng = stream_rng(seed, "context");
        return ContextAggregator(config_.context, store_, rng);
    }())
    , decoder_([&] {
        Rng rng = stream_rng(seed, "decoder");
        return Decoder(config_.decoder, store_, rng);
    }())
{
}

auto AcousticModel::memory(const TextSequence& text) const -> Tensor
{
    return context_.apply(encoder_.encode(text));
}

auto AcousticModel::teacher_forced(const TextSequence& text, const Tensor& target) const
    -> DecoderOutput
{
    return decoder_.teacher_forced_forward(memory(text), target);
}

auto AcousticModel::loss(const TextSequence& text, const Tensor& target) const -> DecoderLoss
{
    return decoder_.loss(teacher_forced(text, target), target);
}

auto AcousticModel::infer(const TextSequence& text) const -> InferenceResult
{
    return decoder_.infer(memory(text));
}

auto AcousticModel::synthesize(const TextSequence& text) const -> features::MelSpectrogram
{
    return tensor_to_mel(infer(text).output.post_mel, config_.features);
}

auto mel_to_tensor(const features::MelSpectrogram& mel) -> Tensor
{
    return Tensor({ mel.num_frames, mel.num_mels }, mel.data);
}

auto tensor_to_mel(const Tensor& frames, const features::FeatureConfig& config)
    -> features::MelSpectrogram
{
    features::MelSpectrogram mel(frames.rows(), frames.cols(), config);
    const auto v = frames.values();
    mel.data.assign(v.begin(), v.end());
    return mel;
}

void save_checkpoint(const std::filesystem::path& path, const AcousticModel& model,
                     std::size_t step)
{
    // write to a sibling and rename so a crash never leaves a torn file
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw CheckpointError("checkpoint: cannot write " + tmp.string());
        }
        put(out, checkpoint_magic);
        put(out, checkpoint_version);
        put<std::uint64_t>(out, step);
        put<std::uint64_t>(out, model.seed());
        put_string(out, format_key_values(model.config().to_key_values()));
        const auto& symbols = model.vocabulary().symbols();
        put<std::uint64_t>(out, symbols.size());
        for (const auto& s : symbols) {
            put_string(out, s);
        }
        const auto& params = model.store().parameters();
        put<std::uint64_t>(out, params.size());
        std::uint64_t offset = 0;
        for (const auto& p : params) {
            put_string(out, p.name);
            put<std::uint64_t>(out, p.tensor.rank());
            for (const auto d : p.tensor.shape()) {
                put<std::uint64_t>(out, d);
            }
            put<std::uint64_t>(out, offset);
            offset += p.tensor.numel();
        }
        put<std::uint64_t>(out, offset);
        for (const auto& p : params) {
            const auto v = p.tensor.values();
            out.write(reinterpret_cast<const char*>(v.data()),
                      static_cast<std::streamsize>(v.size() * sizeof(double)));
        }
        if (!out) {
            throw CheckpointError("checkpoint: write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

auto load_checkpoint(const std::filesystem::path& path) -> LoadedCheckpoint
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("checkpoint: cannot open " + path.string());
    }
    if (get<std::uint32_t>(in, "magic") != checkpoint_magic) {
        throw CheckpointError("checkpoint: " + path.string() + " is not a checkpoint");
    }
    if (const auto v = get<std::uint32_t>(in, "version"); v != checkpoint_version) {
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(v));
    }
    const auto step = get<std::uint64_t>(in, "step");
    const auto seed = get<std::uint64_t>(in, "seed");
    const auto config = ModelConfig::from_key_values(
        parse_key_values(get_string(in, "config"), path.string()));
    const auto num_symbols = get<std::uint64_t>(in, "vocabulary size");
    std::vector<std::string> symbols;
    for (std::uint64_t i = 0; i < num_symbols; ++i) {
        symbols.push_back(get_string(in, "vocabulary"));
    }
    LoadedCheckpoint loaded { AcousticModel(config, Vocabulary(std::move(symbols)), seed),
                              static_cast<std::size_t>(step) };

    const auto& params = loaded.model.store().parameters();
    const auto count = get<std::uint64_t>(in, "parameter count");
    if (count != params.size()) {
        throw CheckpointError("checkpoint: " + std::to_string(count) + " parameters stored, model has "
                              + std::to_string(params.size()));
    }
    std::vector<std::uint64_t> offsets;
    for (const auto& p : params) {
        const auto name = get_string(in, "parameter name");
        if (name != p.name) {
            throw CheckpointError("checkpoint: expected parameter " + p.name + ", found " + name);
        }
        const auto rank = get<std::uint64_t>(in, "rank");
        num::Shape shape;
        for (std::uint64_t r = 0; r < rank; ++r) {
            shape.push_back(static_cast<std::size_t>(get<std::uint64_t>(in, "shape")));
        }
        if (shape != p.tensor.shape()) {
            throw CheckpointError("checkpoint: " + name + " has shape " + num::to_string(shape)
                                  + ", model expects " + num::to_string(p.tensor.shape()));
        }
        offsets.push_back(get<std::uint64_t>(in, "offset"));
    }
    const auto total = get<std::uint64_t>(in, "value count");
    std::vector<double> values(total);
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(total * sizeof(double)))) {
        throw CheckpointError("checkpoint: truncated parameter data");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto dst = params[i].tensor.mutable_values();
        if (offsets[i] + dst.size() > total) {
            throw CheckpointError("checkpoint: index of " + params[i].name + " out of range");
        }
        std::memcpy(dst.data(), values.data() + offsets[i], dst.size() * sizeof(double));
    }
    return loaded;
}

} // namespace sentctx::harness

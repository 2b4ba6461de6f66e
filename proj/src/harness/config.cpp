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


#include "sentctx/harness/config.hpp"

#include "sentctx/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sentctx::harness {

namespace {

auto trim(std::string_view s) -> std::string
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

auto parse_size(const std::string& key, const std::string& value) -> std::size_t
{
    std::size_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + value
                          + "'");
    }
    return out;
}

auto parse_u64(const std::string& key, const std::string& value) -> std::uint64_t
{
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" + value + "'");
    }
    return out;
}

auto parse_double(const std::string& key, const std::string& value) -> double
{
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used == value.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
}

auto format_double(double v) -> std::string
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

auto require(const KeyValues& kv, const std::string& key) -> const std::string&
{
    const auto it = kv.find(key);
    if (it == kv.end()) {
        throw ConfigError("model config: missing key '" + key + "'");
    }
    return it->second;
}

} // namespace

auto to_string(Preset p) -> std::string { return p == Preset::toy ? "toy" : "paper"; }

auto parse_preset(const std::string& text) -> Preset
{
    if (text == "toy") {
        return Preset::toy;
    }
    if (text == "paper") {
        return Preset::paper;
    }
    throw ConfigError("unknown preset '" + text + "' (expected toy|paper)");
}

auto parse_key_values(const std::string& text, const std::string& origin) -> KeyValues
{
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        const std::string key = eq == std::string::npos ? std::string() : trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

auto read_key_values(const std::filesystem::path& path) -> KeyValues
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("config: cannot open " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_key_values(text.str(), path.string());
}

auto format_key_values(const KeyValues& kv) -> std::string
{
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k + " = " + v + "\n";
    }
    return out;
}

auto parse_override(const std::string& assignment) -> std::pair<std::string, std::string>
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
        throw ConfigError("override '" + assignment + "' is not key=value");
    }
    return { trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)) };
}

auto TrainingConfig::for_preset(Preset p) -> TrainingConfig
{
    TrainingConfig c;
    c.preset = p;
    if (p == Preset::paper) {
        c.learning_rate = 1e-4;
        c.warmup_steps = 4000;
        c.steps = 100000;
        c.batch_size = 32;
        c.checkpoint_every = 5000;
        c.model_dim = 512;
        c.num_blocks = 6;
        c.num_heads = 8;
        c.ffn_dim = 2048;
        c.reduction_factor = 1;
        c.max_decoder_steps = 1000;
    }
    return c;
}

auto TrainingConfig::from_key_values(const KeyValues& kv) -> TrainingConfig
{
    TrainingConfig c;
    if (const auto it = kv.find("preset"); it != kv.end()) {
        c = for_preset(parse_preset(it->second));
    }
    for (const auto& [k, v] : kv) {
        if (k != "preset") {
            c.set(k, v);
        }
    }
    c.validate();
    return c;
}

void TrainingConfig::set(const std::string& key, const std::string& value)
{
    if (key == "preset") {
        const auto keep = *this;
        *this = for_preset(parse_preset(value));
        mode = keep.mode;
        seed = keep.seed;
    } else if (key == "mode") {
        mode = parse_aggregation_mode(value);
    } else if (key == "seed") {
        seed = parse_u64(key, value);
    } else if (key == "steps") {
        steps = parse_size(key, value);
    } else if (key == "batch_size") {
        batch_size = parse_size(key, value);
    } else if (key == "learning_rate") {
        learning_rate = parse_double(key, value);
    } else if (key == "warmup_steps") {
        warmup_steps = parse_size(key, value);
    } else if (key == "decay") {
        decay = parse_double(key, value);
    } else if (key == "clip_norm") {
        clip_norm = parse_double(key, value);
    } else if (key == "checkpoint_every") {
        checkpoint_every = parse_size(key, value);
    } else if (key == "model_dim") {
        model_dim = parse_size(key, value);
    } else if (key == "num_blocks") {
        num_blocks = parse_size(key, value);
    } else if (key == "num_heads") {
        num_heads = parse_size(key, value);
    } else if (key == "ffn_dim") {
        ffn_dim = parse_size(key, value);
    } else if (key == "reduction_factor") {
        reduction_factor = parse_size(key, value);
    } else if (key == "max_decoder_steps") {
        max_decoder_steps = parse_size(key, value);
    } else if (key == "num_mels") {
        num_mels = parse_size(key, value);
    } else if (key == "sample_rate") {
        sample_rate = static_cast<int>(parse_size(key, value));
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

auto TrainingConfig::to_key_values() const -> KeyValues
{
    return {
        { "preset", to_string(preset) },
        { "mode", std::string(sentctx::to_string(mode)) },
        { "seed", std::to_string(seed) },
        { "steps", std::to_string(steps) },
        { "batch_size", std::to_string(batch_size) },
        { "learning_rate", format_double(learning_rate) },
        { "warmup_steps", std::to_string(warmup_steps) },
        { "decay", format_double(decay) },
        { "clip_norm", format_double(clip_norm) },
        { "checkpoint_every", std::to_string(checkpoint_every) },
        { "model_dim", std::to_string(model_dim) },
        { "num_blocks", std::to_string(num_blocks) },
        { "num_heads", std::to_string(num_heads) },
        { "ffn_dim", std::to_string(ffn_dim) },
        { "reduction_factor", std::to_string(reduction_factor) },
        { "max_decoder_steps", std::to_string(max_decoder_steps) },
        { "num_mels", std::to_string(num_mels) },
        { "sample_rate", std::to_string(sample_rate) },
    };
}

void TrainingConfig::validate() const
{
    if (steps == 0 || batch_size == 0) {
        throw ConfigError("config: steps and batch_size must be positive");
    }
    if (!(learning_rate > 0.0) || !(decay > 0.0 && decay <= 1.0)) {
        throw ConfigError("config: learning_rate must be positive and decay in (0, 1]");
    }
    if (reduction_factor == 0 || max_decoder_steps == 0) {
        throw ConfigError("config: reduction_factor and max_decoder_steps must be positive");
    }
    if (!features::is_supported_sample_rate(sample_rate)) {
        throw ConfigError("config: sample_rate must be 22050 or 16000");
    }
}

auto ModelConfig::from_training(const TrainingConfig& t, std::size_t vocab_size) -> ModelConfig
{
    ModelConfig m;
    m.preset = t.preset;
    m.encoder = EncoderConfig::paper(vocab_size);
    m.encoder.model_dim = t.model_dim;
    m.encoder.num_blocks = t.num_blocks;
    m.encoder.num_heads = t.num_heads;
    m.encoder.ffn_inner_dim = t.ffn_dim;

    m.context.mode = t.mode;
    m.context.model_dim = t.model_dim;
    m.context.num_blocks = t.num_blocks;
    m.context.attention_heads = t.num_heads;
    m.context.ffn_inner_dim = t.ffn_dim;

    m.decoder = t.preset == Preset::toy ? DecoderConfig::toy(t.model_dim)
                                        : DecoderConfig::paper(t.model_dim);
    m.decoder.num_mels = t.num_mels;
    m.decoder.reduction_factor = t.reduction_factor;
    m.decoder.max_steps = t.max_decoder_steps;

    m.features.sample_rate = t.sample_rate;
    m.features.num_mels = t.num_mels;
    m.validate();
    return m;
}

auto ModelConfig::to_key_values() const -> KeyValues
{
    const auto& e = encoder;
    const auto& c = context;
    const auto& d = decoder;
    const auto& f = features;
    return {
        { "preset", to_string(preset) },
        { "encoder.vocab_size", std::to_string(e.vocab_size) },
        { "encoder.num_blocks", std::to_string(e.num_blocks) },
        { "encoder.num_heads", std::to_string(e.num_heads) },
        { "encoder.model_dim", std::to_string(e.model_dim) },
        { "encoder.ffn_inner_dim", std::to_string(e.ffn_inner_dim) },
        { "encoder.prenet_layers", std::to_string(e.prenet_layers) },
        { "encoder.prenet_kernel", std::to_string(e.prenet_kernel) },
        { "context.mode", std::string(sentctx::to_string(c.mode)) },
        { "context.conv_kernel", std::to_string(c.conv_kernel) },
        { "context.attention_heads", std::to_string(c.attention_heads) },
        { "context.ffn_inner_dim", std::to_string(c.ffn_inner_dim) },
        { "decoder.num_mels", std::to_string(d.num_mels) },
        { "decoder.prenet0", std::to_string(d.prenet_dims[0]) },
        { "decoder.prenet1", std::to_string(d.prenet_dims[1]) },
        { "decoder.rnn0", std::to_string(d.recurrent_dims[0]) },
        { "decoder.rnn1", std::to_string(d.recurrent_dims[1]) },
        { "decoder.reduction_factor", std::to_string(d.reduction_factor) },
        { "decoder.postnet_layers", std::to_string(d.postnet_layers) },
        { "decoder.postnet_channels", std::to_string(d.postnet_channels) },
        { "decoder.postnet_kernel", std::to_string(d.postnet_kernel) },
        { "decoder.stop_threshold", format_double(d.stop_threshold) },
        { "decoder.max_steps", std::to_string(d.max_steps) },
        { "decoder.attention_mixtures", std::to_string(d.attention_mixtures) },
        { "decoder.attention_hidden", std::to_string(d.attention_hidden) },
        { "decoder.mel_loss_weight", format_double(d.mel_loss_weight) },
        { "decoder.stop_loss_weight", format_double(d.stop_loss_weight) },
        { "features.sample_rate", std::to_string(f.sample_rate) },
        { "features.frame_length_ms", format_double(f.frame_length_ms) },
        { "features.frame_shift_ms", format_double(f.frame_shift_ms) },
        { "features.num_mels", std::to_string(f.num_mels) },
        { "features.log_floor", format_double(f.log_floor) },
    };
}

auto ModelConfig::from_key_values(const KeyValues& kv) -> ModelConfig
{
    const auto size = [&](const std::string& k) { return parse_size(k, require(kv, k)); };
    const auto real = [&](const std::string& k) { return parse_double(k, require(kv, k)); };
    ModelConfig m;
    m.preset = parse_preset(require(kv, "preset"));
    m.encoder.vocab_size = size("encoder.vocab_size");
    m.encoder.num_blocks = size("encoder.num_blocks");
    m.encoder.num_heads = size("encoder.num_heads");
    m.encoder.model_dim = size("encoder.model_dim");
    m.encoder.ffn_inner_dim = size("encoder.ffn_inner_dim");
    m.encoder.prenet_layers = size("encoder.prenet_layers");
    m.encoder.prenet_kernel = size("encoder.prenet_kernel");
    m.context.mode = parse_aggregation_mode(require(kv, "context.mode"));
    m.context.model_dim = m.encoder.model_dim;
    m.context.num_blocks = m.encoder.num_blocks;
    m.context.conv_kernel = size("context.conv_kernel");
    m.context.attention_heads = size("context.attention_heads");
    m.context.ffn_inner_dim = size("context.ffn_inner_dim");
    m.decoder.memory_dim = m.encoder.model_dim;
    m.decoder.num_mels = size("decoder.num_mels");
    m.decoder.prenet_dims = { size("decoder.prenet0"), size("decoder.prenet1") };
    m.decoder.recurrent_dims = { size("decoder.rnn0"), size("decoder.rnn1") };
    m.decoder.reduction_factor = size("decoder.reduction_factor");
    m.decoder.postnet_layers = size("decoder.postnet_layers");
    m.decoder.postnet_channels = size("decoder.postnet_channels");
    m.decoder.postnet_kernel = size("decoder.postnet_kernel");
    m.decoder.stop_threshold = real("decoder.stop_threshold");
    m.decoder.max_steps = size("decoder.max_steps");
    m.decoder.attention_mixtures = size("decoder.attention_mixtures");
    m.decoder.attention_hidden = size("decoder.attention_hidden");
    m.decoder.mel_loss_weight = real("decoder.mel_loss_weight");
    m.decoder.stop_loss_weight = real("decoder.stop_loss_weight");
    m.features.sample_rate = static_cast<int>(size("features.sample_rate"));
    m.features.frame_length_ms = real("features.frame_length_ms");
    m.features.frame_shift_ms = real("features.frame_shift_ms");
    m.features.num_mels = size("features.num_mels");
    m.features.log_floor = real("features.log_floor");
    m.validate();
    return m;
}

void ModelConfig::validate() const
{
    encoder.validate();
    context.validate();
    decoder.validate();
    features.validate();
    if (context.model_dim != encoder.model_dim || context.num_blocks != encoder.num_blocks
        || decoder.memory_dim != encoder.model_dim) {
        throw ConfigError("model config: encoder, context and decoder sizes disagree");
    }
    if (decoder.num_mels != features.num_mels) {
        throw ConfigError("model config: decoder predicts " + std::to_string(decoder.num_mels)
                          + " mel bands but features have " + std::to_string(features.num_mels));
    }
}

} // namespace sentctx::harness

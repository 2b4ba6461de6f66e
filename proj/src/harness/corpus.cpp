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


#include "sentctx/harness/corpus.hpp"

#include "sentctx/errors.hpp"
#include "sentctx/numcore/parameter.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace sentctx::harness {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t num_toy_phones = 12;
constexpr std::size_t mark_frames = 3;

auto split_tabs(const std::string& line) -> std::vector<std::string>
{
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, '\t')) {
        if (!field.empty() && field.back() == '\r') {
            field.pop_back();
        }
        fields.push_back(field);
    }
    return fields;
}

auto resolve(const fs::path& root, const std::string& field) -> fs::path
{
    const fs::path p(field);
    return p.is_absolute() ? p : root / p;
}

} // namespace

auto CorpusManifest::load(const fs::path& path) -> CorpusManifest
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("manifest: cannot open " + path.string());
    }
    CorpusManifest m;
    m.root = path.parent_path();
    m.vocabulary = m.root / "vocab.txt";

    std::string line;
    if (!std::getline(in, line)) {
        throw InputError("manifest: " + path.string() + " is empty");
    }
    const auto header = split_tabs(line);
    const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        return std::nullopt;
    };
    const auto id_col = column("id");
    const auto sym_col = column("sym");
    const auto mel_col = column("mel");
    if (!id_col || !sym_col || !mel_col) {
        throw InputError("manifest: header of " + path.string() + " needs id, sym and mel columns");
    }
    const auto align_col = column("align");
    const auto wav_col = column("wav");

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto f = split_tabs(line);
        if (f.size() != header.size()) {
            throw InputError("manifest: " + path.string() + ":" + std::to_string(line_no)
                             + ": expected " + std::to_string(header.size()) + " columns");
        }
        ManifestEntry e;
        e.id = f[*id_col];
        e.symbols = resolve(m.root, f[*sym_col]);
        e.mel = resolve(m.root, f[*mel_col]);
        if (align_col && f[*align_col] != "-") {
            e.alignment = resolve(m.root, f[*align_col]);
        }
        if (wav_col && f[*wav_col] != "-") {
            e.wav = resolve(m.root, f[*wav_col]);
        }
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

void CorpusManifest::save(const fs::path& path) const
{
    std::ofstream out(path);
    if (!out) {
        throw InputError("manifest: cannot write " + path.string());
    }
    const auto rel = [&](const fs::path& p) { return p.lexically_relative(root).string(); };
    out << "id\tsym\tmel\talign\twav\n";
    for (const auto& e : entries) {
        out << e.id << '\t' << rel(e.symbols) << '\t' << rel(e.mel) << '\t'
            << (e.alignment ? rel(*e.alignment) : "-") << '\t' << (e.wav ? rel(*e.wav) : "-")
            << '\n';
    }
}

void CorpusManifest::validate() const
{
    if (entries.empty()) {
        throw InputError("manifest: no utterances");
    }
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (e.id.empty()) {
            throw InputError("manifest: empty utterance id");
        }
        if (!ids.insert(e.id).second) {
            throw InputError("manifest: duplicate id " + e.id);
        }
        std::vector<fs::path> files { e.symbols, e.mel };
        if (e.alignment) {
            files.push_back(*e.alignment);
        }
        if (e.wav) {
            files.push_back(*e.wav);
        }
        for (const auto& f : files) {
            if (!fs::exists(f)) {
                throw InputError("manifest: " + e.id + ": missing file " + f.string());
            }
        }
    }
}

auto load_corpus(const CorpusManifest& manifest, const Vocabulary& vocab) -> std::vector<Utterance>
{
    manifest.validate();
    std::vector<Utterance> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        try {
            Utterance u;
            u.id = e.id;
            u.text = read_symbol_file(e.symbols, vocab);
            u.mel = features::read_mel(e.mel);
            if (e.alignment) {
                u.alignment = prosody::read_alignment(*e.alignment);
                u.alignment->validate(u.mel.num_frames);
            }
            if (e.wav) {
                u.wav = features::read_wav(*e.wav);
            }
            out.push_back(std::move(u));
        } catch (const InputError& err) {
            throw InputError("utterance " + e.id + ": " + err.what());
        }
    }
    return out;
}

auto toy_vocabulary() -> Vocabulary
{
    std::vector<std::string> symbols;
    for (std::size_t k = 0; k < num_toy_phones; ++k) {
        symbols.push_back("p" + std::to_string(k));
    }
    symbols.emplace_back(".");
    symbols.emplace_back("?");
    return Vocabulary(std::move(symbols));
}

auto toy_phone(std::size_t index) -> ToyPhone
{
    const double k = static_cast<double>(index);
    return {
        110.0 + 12.0 * k,
        300.0 + 250.0 * k,
        0.12 + 0.04 * static_cast<double>(index % 4),
        2 + (index * 7) % 5,
    };
}

auto make_toy_utterance(std::uint64_t seed, std::size_t index, const ToyCorpusOptions& options)
    -> Utterance
{
    if (options.min_length == 0 || options.max_length < options.min_length) {
        throw ConfigError("toy corpus: need 1 <= min_length <= max_length");
    }
    num::Rng rng(num::derive_seed(seed, "toy.utterance." + std::to_string(index)));
    std::uniform_int_distribution<std::size_t> length(options.min_length, options.max_length);
    std::uniform_int_distribution<std::size_t> phone(0, num_toy_phones - 1);
    std::uniform_int_distribution<int> jitter(-1, 1);
    std::normal_distribution<double> wobble(0.0, 0.03);
    std::bernoulli_distribution is_question(0.4);

    const auto vocab = toy_vocabulary();
    const std::size_t n = length(rng);
    const bool question = is_question(rng);
    std::vector<std::size_t> phones(n);
    std::vector<std::size_t> durations(n + 1);
    std::vector<double> pitch(n);
    for (std::size_t i = 0; i < n; ++i) {
        phones[i] = phone(rng);
        const auto p = toy_phone(phones[i]);
        durations[i] = static_cast<std::size_t>(
            std::max(1, static_cast<int>(p.duration) + jitter(rng)));
        // statements fall and questions rise over the sentence
        const double progress = static_cast<double>(i) / static_cast<double>(n);
        const double contour = question ? 1.15 + 0.25 * progress : 1.0 - 0.15 * progress;
        pitch[i] = p.f0 * contour * (1.0 + wobble(rng));
    }
    durations[n] = mark_frames;

    const auto& fc = options.features;
    const std::size_t hop = fc.hop_samples();
    const std::size_t win = fc.window_samples();
    std::size_t total_frames = 0;
    for (const auto d : durations) {
        total_frames += d;
    }
    const std::size_t num_samples = win + (total_frames - 1) * hop;
    const double rate = static_cast<double>(fc.sample_rate);
    const double loudness = question ? 1.25 : 1.0;

    Utterance u;
    u.id = "toy_" + std::to_string(seed) + "_" + std::to_string(index);
    u.alignment.emplace();
    features::Waveform wav;
    wav.sample_rate = fc.sample_rate;
    wav.samples.assign(num_samples, 0.0);
    std::size_t frame = 0;
    double phase = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const bool mark = i == n;
        const std::string label = mark ? (question ? "?" : ".") : "p" + std::to_string(phones[i]);
        u.text.tokens.push_back({ *vocab.id(label) });
        u.alignment->entries.push_back({ label, frame, frame + durations[i] });
        const std::size_t lo = frame * hop;
        frame += durations[i];
        const std::size_t hi = mark ? num_samples : frame * hop;
        if (mark) {
            continue; // trailing silence
        }
        const auto p = toy_phone(phones[i]);
        const double f0 = pitch[i];
        const auto harmonics = static_cast<std::size_t>(0.45 * rate / f0);
        std::vector<double> weight(harmonics);
        double norm = 0.0;
        for (std::size_t h = 1; h <= harmonics; ++h) {
            const double off = (static_cast<double>(h) * f0 - p.formant) / 350.0;
            weight[h - 1] = std::exp(-0.5 * off * off) + 0.02 / static_cast<double>(h);
            norm += weight[h - 1] * weight[h - 1];
        }
        norm = std::sqrt(norm);
        for (std::size_t s = lo; s < hi; ++s) {
            double v = 0.0;
            for (std::size_t h = 1; h <= harmonics; ++h) {
                v += weight[h - 1] * std::sin(static_cast<double>(h) * phase);
            }
            wav.samples[s] = loudness * p.amplitude * v / norm;
            phase = std::fmod(phase + 2.0 * std::numbers::pi * f0 / rate, 2.0 * std::numbers::pi);
        }
    }
    u.mel = features::mel_spectrogram(wav, fc);
    if (u.mel.num_frames != total_frames) {
        throw std::logic_error("toy corpus: mel has " + std::to_string(u.mel.num_frames)
                               + " frames, alignment " + std::to_string(total_frames));
    }
    u.wav = std::move(wav);
    return u;
}

auto generate_toy_corpus(const fs::path& dir, const ToyCorpusOptions& options) -> CorpusManifest
{
    if (options.num_utterances == 0) {
        throw ConfigError("toy corpus: need at least one utterance");
    }
    fs::create_directories(dir);
    const auto vocab = toy_vocabulary();
    CorpusManifest m;
    m.root = dir;
    m.vocabulary = dir / "vocab.txt";
    vocab.save(m.vocabulary);
    for (std::size_t i = 0; i < options.num_utterances; ++i) {
        const auto u = make_toy_utterance(options.seed, i, options);
        ManifestEntry e;
        e.id = u.id;
        e.symbols = dir / (u.id + ".sym");
        e.mel = dir / (u.id + ".mel");
        e.alignment = dir / (u.id + ".align");
        e.wav = dir / (u.id + ".wav");
        {
            std::ofstream sym(e.symbols);
            sym << vocab.format(u.text) << '\n';
        }
        features::write_mel(e.mel, u.mel);
        prosody::write_alignment(*e.alignment, *u.alignment);
        features::write_wav(*e.wav, *u.wav);
        m.entries.push_back(std::move(e));
    }
    m.save(dir / "manifest.tsv");
    return m;
}

} // namespace sentctx::harness

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
#include "sentctx/prosody/prosody.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sentctx::harness {

struct ManifestEntry {
    std::string id;
    std::filesystem::path symbols;
    std::filesystem::path mel;
    std::optional<std::filesystem::path> alignment;
    std::optional<std::filesystem::path> wav;
};

/// TSV with header `id sym mel align wav`; `-` marks an absent optional
/// column. Relative paths resolve against the manifest's directory. The
/// vocabulary lives next to it as vocab.txt unless given explicitly.
struct CorpusManifest {
    std::filesystem::path root;
    std::filesystem::path vocabulary;
    std::vector<ManifestEntry> entries;

    static auto load(const std::filesystem::path& path) -> CorpusManifest;
    void save(const std::filesystem::path& path) const;
    /// Ids unique, every referenced file present.
    void validate() const;
};

struct Utterance {
    std::string id;
    TextSequence text;
    features::MelSpectrogram mel;
    std::optional<prosody::PhonemeAlignment> alignment;
    std::optional<features::Waveform> wav;
};

/// Reads every entry; errors name the utterance.
auto load_corpus(const CorpusManifest& manifest, const Vocabulary& vocab)
    -> std::vector<Utterance>;

struct ToyCorpusOptions {
    std::size_t num_utterances = 10;
    std::uint64_t seed = 1;
    std::size_t min_length = 5; // phones per utterance, before the final mark
    std::size_t max_length = 20;
    features::FeatureConfig features;
};

/// Symbol inventory of the toy corpus: phones p0..p11 and the sentence
/// marks "." and "?".
auto toy_vocabulary() -> Vocabulary;

/// Per-phone rule: fundamental, spectral peak, amplitude and typical
/// duration. A question raises pitch and loudness of the whole sentence.
struct ToyPhone {
    double f0 = 0.0;         // Hz
    double formant = 0.0;    // Hz
    double amplitude = 0.0;
    std::size_t duration = 0; // frames before jitter
};
auto toy_phone(std::size_t index) -> ToyPhone;


/// One synthetic utterance, fully determined by (seed, index).
auto make_toy_utterance(std::uint64_t seed, std::size_t index, const ToyCorpusOptions& options)
    -> Utterance;

/// Writes sym/mel/align/wav files, vocab.txt and manifest.tsv into `dir`.
auto generate_toy_corpus(const std::filesystem::path& dir, const ToyCorpusOptions& options)
    -> CorpusManifest;

} // namespace sentctx::harness

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

#include "sentctx/features/audio.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sentctx::prosody {

using features::Waveform;

struct PhonemeSpan {
    std::string label;
    std::size_t start = 0; // first frame
    std::size_t end = 0;   // one past the last frame

    [[nodiscard]] auto frames() const -> std::size_t { return end - start; }
};

struct PhonemeAlignment {
    std::vector<PhonemeSpan> entries;

    /// Ordered, non-overlapping, non-empty spans inside [0, num_frames).
    void validate(std::size_t num_frames) const;
    [[nodiscard]] auto total_frames() const -> std::size_t;
};

/// `label<TAB>start<TAB>end` per line.
auto read_alignment(const std::filesystem::path& path) -> PhonemeAlignment;
void write_alignment(const std::filesystem::path& path, const PhonemeAlignment& alignment);

/// Analysis grid shared with the mel features: frame t covers samples
/// [t * hop, t * hop + window).
struct FrameGrid {
    std::size_t hop = 276;
    std::size_t window = 1103;
};

struct PitchConfig {
    double min_hz = 50.0;
    double max_hz = 600.0;
    double voicing_threshold = 0.5;
    // the smallest-lag peak within this fraction of the best one wins,
    // which suppresses period-doubling
    double octave_tolerance = 0.9;
};

struct PitchFrame {
    double f0 = 0.0; // Hz, 0 when unvoiced
    bool voiced = false;
    double strength = 0.0; // peak normalized cross-correlation
};

/// Normalized cross-correlation pitch tracker with parabolic refinement of
/// the chosen lag. One entry per grid frame that fits in the waveform.
auto estimate_f0(const Waveform& wav, const FrameGrid& grid, const PitchConfig& config = {})
    -> std::vector<PitchFrame>;

struct PhonemeProsody {
    std::string label;
    double energy = 0.0;       // mean |x| in the phoneme over mean |x| of the utterance
    std::size_t duration = 0;  // frames
    std::optional<double> f0;  // mean over voiced frames, Hz
};

/// Samples of phoneme [s, e) are [s * hop, e * hop), except that a span
/// ending at the last frame extends to the end of the waveform.
auto extract_prosody_attributes(const Waveform& wav, const PhonemeAlignment& alignment,
                                std::size_t num_frames, const FrameGrid& grid,
                                const PitchConfig& pitch = {}) -> std::vector<PhonemeProsody>;

class UndefinedCorrelation : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Product-moment coefficient; throws UndefinedCorrelation on zero variance
/// and InputError on length mismatch or fewer than two pairs.
auto pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) -> double;

struct DiversityResult {
    double value = 0.0;
    std::size_t used = 0;
    std::vector<std::size_t> skipped; // utterance indices with < 2 values
};

/// Mean over utterances of the population standard deviation.
auto diversity_stddev(const std::vector<std::vector<double>>& utterances) -> DiversityResult;

enum class Attribute { energy, duration, f0 };
auto to_string(Attribute a) -> std::string;
inline constexpr Attribute all_attributes[] = { Attribute::energy, Attribute::duration,
                                                Attribute::f0 };

enum class CorrelationProtocol { pooled, per_utterance };
auto parse_correlation_protocol(const std::string& text) -> CorrelationProtocol;

/// Values of one attribute per phoneme; duration in frames. F0 of
/// unvoiced phonemes is skipped.
auto attribute_values(const std::vector<PhonemeProsody>& phonemes, Attribute a)
    -> std::vector<double>;

/// Pairs reference and hypothesis phonemes by position (both must have the
/// same length). F0 pairs need both sides voiced. `pooled` concatenates all
/// utterances into one pair of sequences; `per_utterance` averages the
/// per-utterance coefficients over utterances where it is defined.
auto attribute_correlation(const std::vector<std::vector<PhonemeProsody>>& reference,
                           const std::vector<std::vector<PhonemeProsody>>& hypothesis,
                           Attribute a, CorrelationProtocol protocol) -> double;

/// One column of a report table.
struct SystemColumn {
    std::string system;
    std::vector<double> values; // one per row
};

/// Tab-separated table: header `<corner>\t<system>...`, then one line per
/// row label with the values of every column.
void write_table(std::ostream& out, const std::string& corner,
                 const std::vector<std::string>& row_labels,
                 const std::vector<SystemColumn>& columns);

} // namespace sentctx::prosody

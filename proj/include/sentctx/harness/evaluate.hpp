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

#include "sentctx/harness/corpus.hpp"
#include "sentctx/harness/model.hpp"
#include "sentctx/prosody/prosody.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sentctx::harness {

struct EvalOptions {
    bool mcd = true;
    bool prosody_correlation = false;
    bool diversity = false;
    prosody::CorrelationProtocol protocol = prosody::CorrelationProtocol::pooled;
    /// Use each reference mel, waveform and alignment as the system output.
    bool inject_references = false;
    std::size_t griffin_lim_iterations = 32;
    std::uint64_t griffin_lim_seed = 1;
    std::size_t threads = 0; // 0: hardware concurrency
};

struct UtteranceEval {
    std::string id;
    double mcd = 0.0;
    std::size_t frames = 0;
    bool stopped = true;
    std::vector<prosody::PhonemeProsody> reference;
    std::vector<prosody::PhonemeProsody> hypothesis;
};

/// One column of Tables 1/4/5. Attributes are ordered E, Dur., F0;
/// diversity of durations is in milliseconds.
struct SystemReport {
    std::string system;
    std::optional<double> mcd;
    std::optional<std::array<double, 3>> correlation;
    std::optional<std::array<double, 3>> diversity;
    std::optional<std::array<double, 3>> reference_diversity;
    std::vector<UtteranceEval> utterances;
};

/// Phoneme spans of a synthesized utterance from its attention: each
/// decoder step's frames go to the most attended position (forced to be
/// non-decreasing). Positions never attended get no span.
auto alignment_from_attention(const DecoderOutput& output, std::size_t reduction_factor,
                              const std::vector<std::string>& labels)
    -> std::vector<std::optional<prosody::PhonemeSpan>>;

/// Synthesizes every utterance (in parallel) and scores it against its
/// reference. Prosody metrics need an alignment and a waveform for every
/// utterance; the error lists the ones missing.
auto evaluate(const AcousticModel& model, const std::vector<Utterance>& data,
              const EvalOptions& options, const std::string& system) -> SystemReport;

/// mcd.tsv, correlation.tsv and diversity.tsv for the metrics present in
/// every report.
void write_reports(const std::filesystem::path& dir, const std::string& corpus,
                   const std::vector<SystemReport>& reports);

} // namespace sentctx::harness

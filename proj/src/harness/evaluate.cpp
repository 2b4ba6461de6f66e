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


#include "sentctx/harness/evaluate.hpp"

#include "sentctx/features/griffin_lim.hpp"
#include "sentctx/features/mcd.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace sentctx::harness {

namespace {

using prosody::Attribute;
using prosody::PhonemeProsody;

auto grid_of(const features::MelSpectrogram& mel) -> prosody::FrameGrid
{
    return { mel.hop_length, mel.window_length };
}

auto labels_of(const Utterance& u) -> std::vector<std::string>
{
    std::vector<std::string> labels;
    if (u.alignment && u.alignment->entries.size() == u.text.length()) {
        for (const auto& e : u.alignment->entries) {
            labels.push_back(e.label);
        }
    } else {
        for (std::size_t i = 0; i < u.text.length(); ++i) {
            labels.push_back(std::to_string(i));
        }
    }
    return labels;
}

/// Prosody of every position; positions without a span have zero duration
/// and energy and no F0.
auto hypothesis_prosody(const features::Waveform& wav, const features::MelSpectrogram& mel,
                        const std::vector<std::optional<prosody::PhonemeSpan>>& spans,
                        const std::vector<std::string>& labels) -> std::vector<PhonemeProsody>
{
    prosody::PhonemeAlignment present;
    for (const auto& s : spans) {
        if (s) {
            present.entries.push_back(*s);
        }
    }
    const auto measured
        = prosody::extract_prosody_attributes(wav, present, mel.num_frames, grid_of(mel));
    std::vector<PhonemeProsody> out;
    std::size_t next = 0;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i]) {
            out.push_back(measured[next++]);
        } else {
            out.push_back({ labels[i], 0.0, 0, std::nullopt });
        }
    }
    return out;
}

auto evaluate_one(const AcousticModel& model, const Utterance& u, const EvalOptions& options)
    -> UtteranceEval
{
    const bool want_prosody = options.prosody_correlation || options.diversity;
    UtteranceEval r;
    r.id = u.id;
    if (want_prosody) {
        r.reference = prosody::extract_prosody_attributes(*u.wav, *u.alignment, u.mel.num_frames,
                                                          grid_of(u.mel));
    }
    if (options.inject_references) {
        r.frames = u.mel.num_frames;
        if (options.mcd) {
            const auto c = features::mel_cepstrum(u.mel);
            r.mcd = features::mcd(c, c);
        }
        r.hypothesis = r.reference;
        return r;
    }

    const auto inference = model.infer(u.text);
    const auto mel = tensor_to_mel(inference.output.post_mel, model.config().features);
    r.frames = mel.num_frames;
    r.stopped = inference.stopped;
    if (options.mcd) {
        r.mcd = features::mcd(features::mel_cepstrum(u.mel), features::mel_cepstrum(mel));
    }
    if (want_prosody) {
        features::GriffinLimOptions gl;
        gl.iterations = options.griffin_lim_iterations;
        gl.seed = options.griffin_lim_seed;
        const auto wav = features::griffin_lim(mel, features::config_for(mel), gl).waveform;
        const auto labels = labels_of(u);
        const auto spans = alignment_from_attention(
            inference.output, model.config().decoder.reduction_factor, labels);
        r.hypothesis = hypothesis_prosody(wav, mel, spans, labels);
    }
    return r;
}

auto diversity_of(const std::vector<std::vector<PhonemeProsody>>& utterances,
                  double frame_shift_ms) -> std::array<double, 3>
{
    std::array<double, 3> out {};
    for (std::size_t a = 0; a < 3; ++a) {
        const auto attribute = prosody::all_attributes[a];
        std::vector<std::vector<double>> values;
        for (const auto& u : utterances) {
            auto v = prosody::attribute_values(u, attribute);
            if (attribute == Attribute::duration) {
                for (auto& d : v) {
                    d *= frame_shift_ms;
                }
            }
            values.push_back(std::move(v));
        }
        out[a] = prosody::diversity_stddev(values).value;
    }
    return out;
}

} // namespace

auto alignment_from_attention(const DecoderOutput& output, std::size_t reduction_factor,
                              const std::vector<std::string>& labels)
    -> std::vector<std::optional<prosody::PhonemeSpan>>
{
    const std::size_t frames = output.post_mel.rows();
    std::vector<std::optional<prosody::PhonemeSpan>> spans(labels.size());
    std::size_t position = 0;
    for (std::size_t s = 0; s < output.alignments.size(); ++s) {
        const auto w = output.alignments[s].values();
        if (w.size() != labels.size()) {
            throw num::ShapeError("alignment: attention covers " + std::to_string(w.size())
                                  + " positions, text has " + std::to_string(labels.size()));
        }
        const auto best = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
        position = std::max(position, best);
        const std::size_t lo = s * reduction_factor;
        const std::size_t hi = std::min(lo + reduction_factor, frames);
        if (lo >= hi) {
            break;
        }
        auto& span = spans[position];
        if (!span) {
            span = prosody::PhonemeSpan { labels[position], lo, hi };
        } else {
            span->end = hi;
        }
    }
    return spans;
}

auto evaluate(const AcousticModel& model, const std::vector<Utterance>& data,
              const EvalOptions& options, const std::string& system) -> SystemReport
{
    if (data.empty()) {
        throw InputError("evaluate: empty corpus");
    }
    if (!options.mcd && !options.prosody_correlation && !options.diversity) {
        throw ConfigError("evaluate: no metrics requested");
    }
    if (options.prosody_correlation || options.diversity) {
        std::string missing;
        for (const auto& u : data) {
            if (!u.alignment || !u.wav) {
                missing += (missing.empty() ? "" : ", ") + u.id;
            }
        }
        if (!missing.empty()) {
            throw InputError("evaluate: prosody metrics need an alignment and a waveform; missing for "
                             + missing);
        }
    }

    std::vector<UtteranceEval> results(data.size());
    std::vector<std::exception_ptr> errors(data.size());
    std::atomic<std::size_t> next { 0 };
    const auto worker = [&] {
        for (std::size_t i = next++; i < data.size(); i = next++) {
            try {
                results[i] = evaluate_one(model, data[i], options);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::size_t threads = options.threads != 0 ? options.threads
                                               : std::max(1U, std::thread::hardware_concurrency());
    threads = std::min(threads, data.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    SystemReport report;
    report.system = system;
    if (options.mcd) {
        double total = 0.0;
        for (const auto& r : results) {
            total += r.mcd;
        }
        report.mcd = total / static_cast<double>(results.size());
    }
    std::vector<std::vector<PhonemeProsody>> ref;
    std::vector<std::vector<PhonemeProsody>> hyp;
    for (const auto& r : results) {
        ref.push_back(r.reference);
        hyp.push_back(r.hypothesis);
    }
    if (options.prosody_correlation) {
        std::array<double, 3> corr {};
        for (std::size_t a = 0; a < 3; ++a) {
            corr[a] = prosody::attribute_correlation(ref, hyp, prosody::all_attributes[a],
                                                     options.protocol);
        }
        report.correlation = corr;
    }
    if (options.diversity) {
        const double shift_ms = data.front().mel.frame_shift_ms();
        report.diversity = diversity_of(hyp, shift_ms);
        report.reference_diversity = diversity_of(ref, shift_ms);
    }
    report.utterances = std::move(results);
    return report;
}

void write_reports(const std::filesystem::path& dir, const std::string& corpus,
                   const std::vector<SystemReport>& reports)
{
    if (reports.empty()) {
        return;
    }
    std::filesystem::create_directories(dir);
    const auto all = [&](auto member) {
        return std::all_of(reports.begin(), reports.end(),
                           [&](const SystemReport& r) { return (r.*member).has_value(); });
    };
    const auto open = [&](const std::string& name) {
        std::ofstream out(dir / name);
        if (!out) {
            throw InputError("report: cannot write " + (dir / name).string());
        }
        return out;
    };
    const std::vector<std::string> rows { "E", "Dur.", "F0" };
    if (all(&SystemReport::mcd)) {
        std::vector<prosody::SystemColumn> cols;
        for (const auto& r : reports) {
            cols.push_back({ r.system, { *r.mcd } });
        }
        auto out = open("mcd.tsv");
        prosody::write_table(out, "Corpus", { corpus }, cols);
    }
    if (all(&SystemReport::correlation)) {
        std::vector<prosody::SystemColumn> cols;
        for (const auto& r : reports) {
            cols.push_back({ r.system, { r.correlation->begin(), r.correlation->end() } });
        }
        auto out = open("correlation.tsv");
        prosody::write_table(out, "", rows, cols);
    }
    if (all(&SystemReport::diversity)) {
        std::vector<prosody::SystemColumn> cols;
        for (const auto& r : reports) {
            cols.push_back({ r.system, { r.diversity->begin(), r.diversity->end() } });
        }
        const auto& gt = *reports.front().reference_diversity;
        cols.push_back({ "GT", { gt.begin(), gt.end() } });
        auto out = open("diversity.tsv");
        prosody::write_table(out, "", rows, cols);
    }
}

} // namespace sentctx::harness

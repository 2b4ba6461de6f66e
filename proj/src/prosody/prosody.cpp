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


#include "sentctx/prosody/prosody.hpp"

#include "sentctx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace sentctx::prosody {

void PhonemeAlignment::validate(std::size_t num_frames) const
{
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.end <= e.start) {
            throw InputError("alignment: empty span for '" + e.label + "' at entry "
                             + std::to_string(i));
        }
        if (e.start < cursor) {
            throw InputError("alignment: entry " + std::to_string(i) + " ('" + e.label
                             + "') overlaps the previous one");
        }
        if (e.end > num_frames) {
            throw InputError("alignment: entry " + std::to_string(i) + " ends at frame "
                             + std::to_string(e.end) + " past " + std::to_string(num_frames)
                             + " frames");
        }
        cursor = e.end;
    }
}

auto PhonemeAlignment::total_frames() const -> std::size_t
{
    std::size_t n = 0;
    for (const auto& e : entries) {
        n += e.frames();
    }
    return n;
}

auto read_alignment(const std::filesystem::path& path) -> PhonemeAlignment
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("alignment: cannot open " + path.string());
    }
    PhonemeAlignment a;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream fields(line);
        PhonemeSpan span;
        long long start = 0;
        long long end = 0;
        if (!std::getline(fields, span.label, '\t') || !(fields >> start >> end) || start < 0
            || end < 0) {
            throw InputError("alignment: " + path.string() + ":" + std::to_string(line_no)
                             + ": expected label<TAB>start<TAB>end");
        }
        span.start = static_cast<std::size_t>(start);
        span.end = static_cast<std::size_t>(end);
        a.entries.push_back(std::move(span));
    }
    return a;
}

void write_alignment(const std::filesystem::path& path, const PhonemeAlignment& alignment)
{
    std::ofstream out(path);
    if (!out) {
        throw InputError("alignment: cannot write " + path.string());
    }
    for (const auto& e : alignment.entries) {
        out << e.label << '\t' << e.start << '\t' << e.end << '\n';
    }
}

namespace {

auto analyse_frame(std::span<const double> frame, int sample_rate, const PitchConfig& config)
    -> PitchFrame
{
    const double rate = static_cast<double>(sample_rate);
    const auto min_lag = static_cast<std::size_t>(std::floor(rate / config.max_hz));
    const auto max_lag = static_cast<std::size_t>(std::ceil(rate / config.min_hz));
    if (frame.size() <= max_lag + 2) {
        throw ConfigError("pitch: analysis window of " + std::to_string(frame.size())
                          + " samples is too short for " + std::to_string(config.min_hz) + " Hz");
    }
    const double mean = std::accumulate(frame.begin(), frame.end(), 0.0)
                        / static_cast<double>(frame.size());
    std::vector<double> x(frame.size());
    std::transform(frame.begin(), frame.end(), x.begin(), [mean](double v) { return v - mean; });

    const std::size_t span = frame.size() - max_lag - 1;
    double head_energy = 0.0;
    for (std::size_t n = 0; n < span; ++n) {
        head_energy += x[n] * x[n];
    }
    PitchFrame out;
    if (head_energy <= 1e-12) {
        return out;
    }
    // r[tau] for tau in [min_lag - 1, max_lag + 1] so every candidate has neighbours
    const std::size_t first = min_lag > 1 ? min_lag - 1 : 1;
    const std::size_t last = max_lag + 1;
    std::vector<double> r(last + 1, 0.0);
    for (std::size_t tau = first; tau <= last; ++tau) {
        double cross = 0.0;
        double lagged = 0.0;
        for (std::size_t n = 0; n < span; ++n) {
            cross += x[n] * x[n + tau];
            lagged += x[n + tau] * x[n + tau];
        }
        r[tau] = lagged > 1e-12 ? cross / std::sqrt(head_energy * lagged) : 0.0;
    }
    double best = 0.0;
    for (std::size_t tau = first + 1; tau < last; ++tau) {
        if (r[tau] >= r[tau - 1] && r[tau] >= r[tau + 1]) {
            best = std::max(best, r[tau]);
        }
    }
    if (best < config.voicing_threshold) {
        out.strength = best;
        return out;
    }
    for (std::size_t tau = first + 1; tau < last; ++tau) {
        if (r[tau] >= r[tau - 1] && r[tau] >= r[tau + 1]
            && r[tau] >= config.octave_tolerance * best) {
            const double a = r[tau - 1];
            const double b = r[tau];
            const double c = r[tau + 1];
            const double denom = a - 2.0 * b + c;
            const double shift = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
            out.f0 = rate / (static_cast<double>(tau) + shift);
            out.voiced = true;
            out.strength = b;
            return out;
        }
    }
    return out;
}

} // namespace

auto estimate_f0(const Waveform& wav, const FrameGrid& grid, const PitchConfig& config)
    -> std::vector<PitchFrame>
{
    if (grid.hop == 0 || grid.window == 0) {
        throw ConfigError("pitch: hop and window must be positive");
    }
    if (!(config.min_hz > 0.0) || !(config.max_hz > config.min_hz)) {
        throw ConfigError("pitch: need 0 < min_hz < max_hz");
    }
    std::vector<PitchFrame> track;
    const std::span<const double> all(wav.samples);
    for (std::size_t start = 0; start + grid.window <= all.size(); start += grid.hop) {
        track.push_back(analyse_frame(all.subspan(start, grid.window), wav.sample_rate, config));
    }
    return track;
}

auto extract_prosody_attributes(const Waveform& wav, const PhonemeAlignment& alignment,
                                std::size_t num_frames, const FrameGrid& grid,
                                const PitchConfig& pitch) -> std::vector<PhonemeProsody>
{
    alignment.validate(num_frames);
    const std::size_t n = wav.samples.size();
    double utterance = 0.0;
    for (const double v : wav.samples) {
        utterance += std::abs(v);
    }
    utterance = n > 0 ? utterance / static_cast<double>(n) : 0.0;
    const auto track = estimate_f0(wav, grid, pitch);

    std::vector<PhonemeProsody> out;
    out.reserve(alignment.entries.size());
    for (const auto& e : alignment.entries) {
        PhonemeProsody p;
        p.label = e.label;
        p.duration = e.frames();

        const std::size_t lo = std::min(e.start * grid.hop, n);
        const std::size_t hi = e.end == num_frames ? n : std::min(e.end * grid.hop, n);
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            sum += std::abs(wav.samples[i]);
        }
        if (hi > lo && utterance > 0.0) {
            p.energy = sum / static_cast<double>(hi - lo) / utterance;
        }

        double f0 = 0.0;
        std::size_t voiced = 0;
        for (std::size_t t = e.start; t < std::min(e.end, track.size()); ++t) {
            if (track[t].voiced) {
                f0 += track[t].f0;
                ++voiced;
            }
        }
        if (voiced > 0) {
            p.f0 = f0 / static_cast<double>(voiced);
        }
        out.push_back(std::move(p));
    }
    return out;
}

auto pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) -> double
{
    if (x.size() != y.size()) {
        throw InputError("pearson: " + std::to_string(x.size()) + " vs " + std::to_string(y.size())
                         + " values");
    }
    if (x.size() < 2) {
        throw UndefinedCorrelation("pearson: need at least two pairs");
    }
    const double count = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / count;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / count;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw UndefinedCorrelation("pearson: zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

auto diversity_stddev(const std::vector<std::vector<double>>& utterances) -> DiversityResult
{
    DiversityResult r;
    double total = 0.0;
    for (std::size_t u = 0; u < utterances.size(); ++u) {
        const auto& v = utterances[u];
        if (v.size() < 2) {
            r.skipped.push_back(u);
            continue;
        }
        const double count = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / count;
        double var = 0.0;
        for (const double x : v) {
            var += (x - mean) * (x - mean);
        }
        total += std::sqrt(var / count);
        ++r.used;
    }
    if (r.used == 0) {
        throw InputError("diversity: no utterance has two or more values");
    }
    r.value = total / static_cast<double>(r.used);
    return r;
}

auto to_string(Attribute a) -> std::string
{
    switch (a) {
    case Attribute::energy:
        return "E";
    case Attribute::duration:
        return "Dur.";
    case Attribute::f0:
        return "F0";
    }
    return "?";
}

auto parse_correlation_protocol(const std::string& text) -> CorrelationProtocol
{
    if (text == "pooled") {
        return CorrelationProtocol::pooled;
    }
    if (text == "per_utterance") {
        return CorrelationProtocol::per_utterance;
    }
    throw ConfigError("unknown correlation protocol '" + text
                      + "' (expected pooled|per_utterance)");
}

auto attribute_values(const std::vector<PhonemeProsody>& phonemes, Attribute a)
    -> std::vector<double>
{
    std::vector<double> v;
    for (const auto& p : phonemes) {
        switch (a) {
        case Attribute::energy:
            v.push_back(p.energy);
            break;
        case Attribute::duration:
            v.push_back(static_cast<double>(p.duration));
            break;
        case Attribute::f0:
            if (p.f0) {
                v.push_back(*p.f0);
            }
            break;
        }
    }
    return v;
}

namespace {

void paired_values(const std::vector<PhonemeProsody>& ref, const std::vector<PhonemeProsody>& hyp,
                   Attribute a, std::vector<double>& x, std::vector<double>& y)
{
    if (ref.size() != hyp.size()) {
        throw InputError("correlation: " + std::to_string(ref.size()) + " reference vs "
                         + std::to_string(hyp.size()) + " synthesized phonemes");
    }
    for (std::size_t i = 0; i < ref.size(); ++i) {
        switch (a) {
        case Attribute::energy:
            x.push_back(ref[i].energy);
            y.push_back(hyp[i].energy);
            break;
        case Attribute::duration:
            x.push_back(static_cast<double>(ref[i].duration));
            y.push_back(static_cast<double>(hyp[i].duration));
            break;
        case Attribute::f0:
            if (ref[i].f0 && hyp[i].f0) {
                x.push_back(*ref[i].f0);
                y.push_back(*hyp[i].f0);
            }
            break;
        }
    }
}

} // namespace

auto attribute_correlation(const std::vector<std::vector<PhonemeProsody>>& reference,
                           const std::vector<std::vector<PhonemeProsody>>& hypothesis,
                           Attribute a, CorrelationProtocol protocol) -> double
{
    if (reference.size() != hypothesis.size()) {
        throw InputError("correlation: utterance counts differ");
    }
    if (protocol == CorrelationProtocol::pooled) {
        std::vector<double> x;
        std::vector<double> y;
        for (std::size_t u = 0; u < reference.size(); ++u) {
            paired_values(reference[u], hypothesis[u], a, x, y);
        }
        return pearson_correlation(x, y);
    }
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t u = 0; u < reference.size(); ++u) {
        std::vector<double> x;
        std::vector<double> y;
        paired_values(reference[u], hypothesis[u], a, x, y);
        try {
            total += pearson_correlation(x, y);
            ++used;
        } catch (const UndefinedCorrelation&) {
        }
    }
    if (used == 0) {
        throw UndefinedCorrelation("correlation: undefined for every utterance (" + to_string(a)
                                   + ")");
    }
    return total / static_cast<double>(used);
}

void write_table(std::ostream& out, const std::string& corner,
                 const std::vector<std::string>& row_labels,
                 const std::vector<SystemColumn>& columns)
{
    out << corner;
    for (const auto& c : columns) {
        if (c.values.size() != row_labels.size()) {
            throw InputError("table: column " + c.system + " has " + std::to_string(c.values.size())
                             + " values for " + std::to_string(row_labels.size()) + " rows");
        }
        out << '\t' << c.system;
    }
    out << '\n';
    char buf[64];
    for (std::size_t r = 0; r < row_labels.size(); ++r) {
        out << row_labels[r];
        for (const auto& c : columns) {
            std::snprintf(buf, sizeof buf, "%.4f", c.values[r]);
            out << '\t' << buf;
        }
        out << '\n';
    }
}

} // namespace sentctx::prosody

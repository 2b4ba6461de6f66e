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


#include "sentctx/errors.hpp"
#include "sentctx/features/mel.hpp"
#include "sentctx/prosody/prosody.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>

using namespace sentctx;
using namespace sentctx::prosody;

namespace {

auto tone(double hz, std::size_t n, int rate, double amplitude = 0.5) -> Waveform
{
    Waveform w;
    w.sample_rate = rate;
    for (std::size_t i = 0; i < n; ++i) {
        w.samples.push_back(amplitude
                            * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
    }
    return w;
}

auto grid_for(int rate) -> FrameGrid
{
    features::FeatureConfig c;
    c.sample_rate = rate;
    return { c.hop_samples(), c.window_samples() };
}

auto voiced_mean(const std::vector<PitchFrame>& track) -> double
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& f : track) {
        if (f.voiced) {
            sum += f.f0;
            ++n;
        }
    }
    REQUIRE(n > 0);
    return sum / static_cast<double>(n);
}

auto frames_for(std::size_t samples, const FrameGrid& g) -> std::size_t
{
    return 1 + (samples - g.window) / g.hop;
}

} // namespace

TEST_CASE("pure tones are tracked within 2 Hz at both sample rates")
{
    for (const int rate : { 22050, 16000 }) {
        const auto grid = grid_for(rate);
        for (const double hz : { 100.0, 220.0, 440.0 }) {
            CAPTURE(rate);
            CAPTURE(hz);
            const auto track = estimate_f0(tone(hz, static_cast<std::size_t>(rate), rate), grid);
            CHECK(track.size() == frames_for(static_cast<std::size_t>(rate), grid));
            for (const auto& f : track) {
                REQUIRE(f.voiced);
                CHECK(std::abs(f.f0 - hz) < 2.0);
            }
        }
    }
}

TEST_CASE("an octave apart reads as a ratio of two")
{
    const auto grid = grid_for(22050);
    const double low = voiced_mean(estimate_f0(tone(100.0, 22050, 22050), grid));
    const double high = voiced_mean(estimate_f0(tone(200.0, 22050, 22050), grid));
    CHECK(std::abs(high / low - 2.0) < 0.04);
}

TEST_CASE("a harmonic-rich sawtooth reports its fundamental")
{
    Waveform w;
    const double hz = 200.0;
    for (std::size_t i = 0; i < 22050; ++i) {
        const double phase = std::fmod(hz * static_cast<double>(i) / 22050.0, 1.0);
        w.samples.push_back(0.4 * (2.0 * phase - 1.0));
    }
    const auto track = estimate_f0(w, grid_for(22050));
    for (const auto& f : track) {
        REQUIRE(f.voiced);
        CHECK(std::abs(f.f0 - hz) < 3.0);
    }
}

TEST_CASE("white noise and silence are mostly unvoiced")
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> d(0.0, 0.2);
    Waveform noise;
    for (std::size_t i = 0; i < 22050; ++i) {
        noise.samples.push_back(d(rng));
    }
    const auto track = estimate_f0(noise, grid_for(22050));
    const auto voiced = std::count_if(track.begin(), track.end(), [](const auto& f) { return f.voiced; });
    CHECK(static_cast<double>(voiced) < 0.1 * static_cast<double>(track.size()));

    Waveform silence;
    silence.samples.assign(22050, 0.0);
    for (const auto& f : estimate_f0(silence, grid_for(22050))) {
        CHECK_FALSE(f.voiced);
    }
}

TEST_CASE("energy is relative to the utterance mean absolute amplitude")
{
    const FrameGrid grid { 200, 800 };
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(8000, 0.25);
    for (std::size_t i = 0; i < w.samples.size(); i += 2) {
        w.samples[i] = -0.25;
    }
    const std::size_t frames = frames_for(w.samples.size(), grid);
    PhonemeAlignment a { { { "a", 0, 10 }, { "b", 10, 25 }, { "c", 25, frames } } };
    const auto p = extract_prosody_attributes(w, a, frames, grid);
    REQUIRE(p.size() == 3);
    for (const auto& ph : p) {
        CHECK(ph.energy == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(p[1].duration == 15);
    CHECK(p[0].duration + p[1].duration + p[2].duration == frames);

    const PhonemeAlignment whole { { { "all", 0, frames } } };
    CHECK(extract_prosody_attributes(w, whole, frames, grid)[0].energy == 1.0);
}

TEST_CASE("energy follows a louder phoneme")
{
    const FrameGrid grid { 100, 400 };
    Waveform w = tone(220.0, 4000, 16000, 0.1);
    for (std::size_t i = 2000; i < 4000; ++i) {
        w.samples[i] *= 3.0;
    }
    const std::size_t frames = frames_for(w.samples.size(), grid);
    PhonemeAlignment a { { { "quiet", 0, 20 }, { "loud", 20, frames } } };
    const auto p = extract_prosody_attributes(w, a, frames, grid);
    // mean |x| ratio 1:3 over equal-length halves gives 0.5 and 1.5
    CHECK(p[0].energy == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(p[1].energy == doctest::Approx(1.5).epsilon(1e-3));
    REQUIRE(p[0].f0.has_value());
    CHECK(std::abs(*p[0].f0 - 220.0) < 2.0);
}

TEST_CASE("unvoiced phonemes have no F0")
{
    const FrameGrid grid { 200, 800 };
    Waveform w;
    w.sample_rate = 16000;
    w.samples.assign(8000, 0.0);
    const std::size_t frames = frames_for(w.samples.size(), grid);
    const PhonemeAlignment a { { { "sil", 0, frames } } };
    const auto p = extract_prosody_attributes(w, a, frames, grid);
    CHECK_FALSE(p[0].f0.has_value());
    CHECK(p[0].energy == 0.0);
    CHECK(attribute_values(p, Attribute::f0).empty());
}

TEST_CASE("alignment validation and round trip")
{
    PhonemeAlignment a { { { "p1", 0, 4 }, { "p2", 4, 9 } } };
    CHECK_NOTHROW(a.validate(9));
    CHECK_THROWS_AS(a.validate(8), InputError);
    CHECK_THROWS_AS((PhonemeAlignment { { { "x", 3, 3 } } }.validate(5)), InputError);
    CHECK_THROWS_AS((PhonemeAlignment { { { "x", 0, 3 }, { "y", 2, 4 } } }.validate(5)),
                    InputError);
    CHECK(a.total_frames() == 9);

    const auto path = std::filesystem::temp_directory_path() / "sentctx_align_test.tsv";
    write_alignment(path, a);
    const auto b = read_alignment(path);
    REQUIRE(b.entries.size() == 2);
    CHECK(b.entries[1].label == "p2");
    CHECK(b.entries[1].start == 4);
    CHECK(b.entries[1].end == 9);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_alignment(path), InputError);
}

TEST_CASE("pearson correlation")
{
    const std::vector<double> x { 1, 2, 3, 4 };
    std::vector<double> neg(x.size());
    std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
    CHECK(pearson_correlation(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pearson_correlation(x, neg) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(pearson_correlation(x, { 2, 4, 5, 9 }) == doctest::Approx(0.9647638212377322).epsilon(1e-14));

    CHECK_THROWS_AS(pearson_correlation(x, { 5, 5, 5, 5 }), UndefinedCorrelation);
    CHECK_THROWS_AS(pearson_correlation({ 1 }, { 2 }), UndefinedCorrelation);
    CHECK_THROWS_AS(pearson_correlation(x, { 1, 2 }), InputError);
}

TEST_CASE("pearson correlation is invariant to positive affine maps and symmetric")
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> d(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(12);
        std::vector<double> y(12);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = d(rng);
            y[i] = 0.5 * x[i] + d(rng);
        }
        const double r = pearson_correlation(x, y);
        CHECK(std::abs(r) <= 1.0);
        CHECK(pearson_correlation(y, x) == doctest::Approx(r).epsilon(1e-12));
        const double a = scale(rng);
        const double b = d(rng);
        std::vector<double> mapped(x.size());
        std::transform(x.begin(), x.end(), mapped.begin(), [&](double v) { return a * v + b; });
        CHECK(pearson_correlation(mapped, y) == doctest::Approx(r).epsilon(1e-10));
    }
}

TEST_CASE("diversity is the mean population standard deviation")
{
    CHECK(diversity_stddev({ { 0.0, 2.0 } }).value == doctest::Approx(1.0));
    const auto r = diversity_stddev({ { 3, 1, 4, 1, 5 }, { 7 }, { 2, 7 } });
    CHECK(r.value == doctest::Approx(2.05).epsilon(1e-14));
    CHECK(r.used == 2);
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0] == 1);

    // order of values and of utterances does not matter
    const auto s = diversity_stddev({ { 7, 2 }, { 5, 1, 1, 4, 3 } });
    CHECK(s.value == doctest::Approx(r.value).epsilon(1e-14));
    CHECK(diversity_stddev({ { 4, 4, 4 } }).value == 0.0);
    CHECK_THROWS_AS(diversity_stddev({ { 1 } }), InputError);
}

TEST_CASE("correlation protocols")
{
    const auto utt = [](std::vector<double> e, std::vector<std::size_t> dur,
                        std::vector<std::optional<double>> f0) {
        std::vector<PhonemeProsody> v;
        for (std::size_t i = 0; i < e.size(); ++i) {
            v.push_back({ "p", e[i], dur[i], f0[i] });
        }
        return v;
    };
    const std::vector<std::vector<PhonemeProsody>> ref {
        utt({ 1, 2, 3 }, { 4, 6, 9 }, { 100.0, std::nullopt, 120.0 }),
        utt({ 0.5, 1.5 }, { 3, 5 }, { 110.0, 130.0 }),
    };
    const std::vector<std::vector<PhonemeProsody>> hyp {
        utt({ 1, 3, 2 }, { 5, 6, 8 }, { 101.0, 90.0, std::nullopt }),
        utt({ 1.0, 1.2 }, { 3, 4 }, { 115.0, 125.0 }),
    };
    const double pooled_e = pearson_correlation({ 1, 2, 3, 0.5, 1.5 }, { 1, 3, 2, 1.0, 1.2 });
    CHECK(attribute_correlation(ref, hyp, Attribute::energy, CorrelationProtocol::pooled)
          == doctest::Approx(pooled_e).epsilon(1e-14));
    const double per_e = 0.5 * (pearson_correlation({ 1, 2, 3 }, { 1, 3, 2 }) + 1.0);
    CHECK(attribute_correlation(ref, hyp, Attribute::energy, CorrelationProtocol::per_utterance)
          == doctest::Approx(per_e).epsilon(1e-14));
    // only phonemes voiced on both sides: (100,101), (110,115), (130,125)
    const double pooled_f0 = pearson_correlation({ 100, 110, 130 }, { 101, 115, 125 });
    CHECK(attribute_correlation(ref, hyp, Attribute::f0, CorrelationProtocol::pooled)
          == doctest::Approx(pooled_f0).epsilon(1e-14));
    // the first utterance has a single voiced pair, so only the second counts
    CHECK(attribute_correlation(ref, hyp, Attribute::f0, CorrelationProtocol::per_utterance)
          == doctest::Approx(1.0));
    CHECK(parse_correlation_protocol("pooled") == CorrelationProtocol::pooled);
    CHECK_THROWS_AS(parse_correlation_protocol("mean"), ConfigError);
    auto short_hyp = hyp;
    short_hyp[0].pop_back();
    CHECK_THROWS_AS(attribute_correlation(ref, short_hyp, Attribute::energy,
                                          CorrelationProtocol::pooled),
                    InputError);
}

TEST_CASE("report tables")
{
    std::ostringstream out;
    write_table(out, "", { "E", "Dur.", "F0" },
                { { "SA", { 0.5, 0.25, 0.125 } }, { "SA-WA", { 1.0, 2.0, 3.0 } } });
    CHECK(out.str()
          == "\tSA\tSA-WA\nE\t0.5000\t1.0000\nDur.\t0.2500\t2.0000\nF0\t0.1250\t3.0000\n");
    std::ostringstream bad;
    CHECK_THROWS_AS(write_table(bad, "Corpus", { "toy" }, { { "SA", {} } }), InputError);
}

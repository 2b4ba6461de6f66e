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


#include "sentctx/features/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>

namespace sentctx::features {

namespace {

auto fftw_planner_mutex() -> std::mutex&
{
    static std::mutex m;
    return m;
}

} // namespace

auto FeatureConfig::window_samples() const -> std::size_t
{
    return static_cast<std::size_t>(std::lround(frame_length_ms * sample_rate / 1000.0));
}

auto FeatureConfig::hop_samples() const -> std::size_t
{
    return static_cast<std::size_t>(std::lround(frame_shift_ms * sample_rate / 1000.0));
}

auto FeatureConfig::fft_size() const -> std::size_t { return std::bit_ceil(window_samples()); }

void FeatureConfig::validate() const
{
    if (!is_supported_sample_rate(sample_rate)) {
        throw ConfigError("features: unsupported sample rate " + std::to_string(sample_rate));
    }
    if (!(frame_length_ms > 0.0) || !(frame_shift_ms > 0.0) || hop_samples() == 0
        || hop_samples() > window_samples()) {
        throw ConfigError("features: need 0 < frame shift <= frame length");
    }
    if (num_mels < 2) {
        throw ConfigError("features: need at least two mel bands");
    }
    if (!(log_floor > 0.0)) {
        throw ConfigError("features: log floor must be positive");
    }
}

MelSpectrogram::MelSpectrogram(std::size_t frames, std::size_t mels, const FeatureConfig& config)
    : num_frames(frames)
    , num_mels(mels)
    , data(frames * mels, 0.0)
    , sample_rate(config.sample_rate)
    , hop_length(config.hop_samples())
    , window_length(config.window_samples())
{
}

auto MelSpectrogram::frame_shift_ms() const -> double
{
    return 1000.0 * static_cast<double>(hop_length) / sample_rate;
}

auto MelSpectrogram::frame_length_ms() const -> double
{
    return 1000.0 * static_cast<double>(window_length) / sample_rate;
}

void validate(const MelSpectrogram& mel)
{
    if (mel.data.size() != mel.num_frames * mel.num_mels) {
        throw InputError("mel: data size does not match frames x mels");
    }
    if (mel.sample_rate <= 0 || mel.hop_length == 0 || mel.window_length == 0) {
        throw InputError("mel: missing frame metadata");
    }
    for (std::size_t i = 0; i < mel.data.size(); ++i) {
        if (!std::isfinite(mel.data[i])) {
            throw InputError("mel: non-finite value at frame " + std::to_string(i / mel.num_mels)
                             + " band " + std::to_string(i % mel.num_mels));
        }
    }
}

auto frame_count(std::size_t num_samples, const FeatureConfig& config) -> std::size_t
{
    const std::size_t win = config.window_samples();
    if (num_samples < win) {
        return 0;
    }
    return 1 + (num_samples - win) / config.hop_samples();
}

auto hann_window(std::size_t length) -> std::vector<double>
{
    std::vector<double> w(length);
    for (std::size_t i = 0; i < length; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i)
                                    / static_cast<double>(length));
    }
    return w;
}

struct Fft::Impl {
    double* real = nullptr;
    fftw_complex* spectrum = nullptr;
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
};

Fft::Fft(std::size_t size)
    : size_(size)
    , impl_(std::make_unique<Impl>())
{
    if (size < 2) {
        throw ConfigError("fft: size must be at least 2");
    }
    const std::lock_guard lock(fftw_planner_mutex());
    const int n = static_cast<int>(size);
    impl_->real = fftw_alloc_real(size);
    impl_->spectrum = fftw_alloc_complex(size / 2 + 1);
    impl_->forward = fftw_plan_dft_r2c_1d(n, impl_->real, impl_->spectrum, FFTW_ESTIMATE);
    impl_->inverse = fftw_plan_dft_c2r_1d(n, impl_->spectrum, impl_->real, FFTW_ESTIMATE);
}

Fft::~Fft()
{
    const std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(impl_->forward);
    fftw_destroy_plan(impl_->inverse);
    fftw_free(impl_->real);
    fftw_free(impl_->spectrum);
}

auto Fft::forward(std::span<const double> input) -> std::vector<std::complex<double>>
{
    if (input.size() > size_) {
        throw ConfigError("fft: frame of " + std::to_string(input.size())
                          + " samples exceeds size " + std::to_string(size_));
    }
    std::fill(impl_->real, impl_->real + size_, 0.0);
    std::copy(input.begin(), input.end(), impl_->real);
    fftw_execute(impl_->forward);
    std::vector<std::complex<double>> out(size_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = { impl_->spectrum[k][0], impl_->spectrum[k][1] };
    }
    return out;
}

auto Fft::inverse(std::span<const std::complex<double>> bins) -> std::vector<double>
{
    if (bins.size() != size_ / 2 + 1) {
        throw ConfigError("fft: expected " + std::to_string(size_ / 2 + 1) + " bins");
    }
    for (std::size_t k = 0; k < bins.size(); ++k) {
        impl_->spectrum[k][0] = bins[k].real();
        impl_->spectrum[k][1] = bins[k].imag();
    }
    fftw_execute(impl_->inverse);
    std::vector<double> out(impl_->real, impl_->real + size_);
    for (auto& v : out) {
        v /= static_cast<double>(size_);
    }
    return out;
}

auto stft(std::span<const double> samples, const FeatureConfig& config)
    -> std::vector<std::vector<std::complex<double>>>
{
    const std::size_t win = config.window_samples();
    const std::size_t hop = config.hop_samples();
    const auto window = hann_window(win);
    Fft fft(config.fft_size());
    std::vector<std::vector<std::complex<double>>> frames;
    const std::size_t count = frame_count(samples.size(), config);
    frames.reserve(count);
    std::vector<double> buf(win);
    for (std::size_t t = 0; t < count; ++t) {
        for (std::size_t i = 0; i < win; ++i) {
            buf[i] = samples[t * hop + i] * window[i];
        }
        frames.push_back(fft.forward(buf));
    }
    return frames;
}

auto istft(const std::vector<std::vector<std::complex<double>>>& frames,
           const FeatureConfig& config) -> std::vector<double>
{
    if (frames.empty()) {
        return {};
    }
    const std::size_t win = config.window_samples();
    const std::size_t hop = config.hop_samples();
    const auto window = hann_window(win);
    Fft fft(config.fft_size());
    const std::size_t n = (frames.size() - 1) * hop + win;
    std::vector<double> out(n, 0.0);
    std::vector<double> norm(n, 0.0);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto chunk = fft.inverse(frames[t]);
        for (std::size_t i = 0; i < win; ++i) {
            out[t * hop + i] += chunk[i] * window[i];
            norm[t * hop + i] += window[i] * window[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (norm[i] > 1e-8) {
            out[i] /= norm[i];
        }
    }
    return out;
}

auto hz_to_mel(double hz) -> double { return 2595.0 * std::log10(1.0 + hz / 700.0); }

auto mel_to_hz(double mel) -> double { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

auto mel_edges(const FeatureConfig& config) -> std::vector<double>
{
    const double top = hz_to_mel(config.sample_rate / 2.0);
    std::vector<double> edges(config.num_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(edges.size() - 1));
    }
    return edges;
}

} // namespace

auto mel_center_frequencies(const FeatureConfig& config) -> std::vector<double>
{
    const auto edges = mel_edges(config);
    return { edges.begin() + 1, edges.end() - 1 };
}

auto mel_filterbank(const FeatureConfig& config) -> std::vector<double>
{
    config.validate();
    const std::size_t bins = config.num_bins();
    const auto edges = mel_edges(config);
    const double bin_hz = static_cast<double>(config.sample_rate)
        / static_cast<double>(config.fft_size());
    std::vector<double> fb(config.num_mels * bins, 0.0);
    for (std::size_t m = 0; m < config.num_mels; ++m) {
        const double lo = edges[m];
        const double mid = edges[m + 1];
        const double hi = edges[m + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double w = 0.0;
            if (f > lo && f <= mid) {
                w = (f - lo) / (mid - lo);
            } else if (f > mid && f < hi) {
                w = (hi - f) / (hi - mid);
            }
            fb[m * bins + k] = w;
        }
    }
    return fb;
}

auto mel_spectrogram(const Waveform& wav, const FeatureConfig& config) -> MelSpectrogram
{
    config.validate();
    validate(wav);
    if (wav.sample_rate != config.sample_rate) {
        throw InputError("mel: waveform rate " + std::to_string(wav.sample_rate)
                         + " differs from feature rate " + std::to_string(config.sample_rate));
    }
    const std::size_t frames = frame_count(wav.samples.size(), config);
    if (frames == 0) {
        throw InputError("mel: waveform of " + std::to_string(wav.samples.size())
                         + " samples is shorter than one analysis window ("
                         + std::to_string(config.window_samples()) + ")");
    }
    const auto spectra = stft(wav.samples, config);
    const auto fb = mel_filterbank(config);
    const std::size_t bins = config.num_bins();
    MelSpectrogram mel(frames, config.num_mels, config);
    std::vector<double> magnitude(bins);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < bins; ++k) {
            magnitude[k] = std::abs(spectra[t][k]);
        }
        auto row = mel.frame(t);
        for (std::size_t m = 0; m < config.num_mels; ++m) {
            double e = 0.0;
            for (std::size_t k = 0; k < bins; ++k) {
                e += fb[m * bins + k] * magnitude[k];
            }
            row[m] = std::log(std::max(e, config.log_floor));
        }
    }
    return mel;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

auto get_u32(std::istream& in) -> std::uint32_t
{
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw InputError("mel file: truncated header");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8)
        | (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("mel file: cannot open " + path.string() + " for writing");
    }
    for (const std::uint32_t v :
         { mel_file_magic, mel_file_version, static_cast<std::uint32_t>(mel.num_frames),
           static_cast<std::uint32_t>(mel.num_mels), static_cast<std::uint32_t>(mel.sample_rate),
           static_cast<std::uint32_t>(mel.hop_length),
           static_cast<std::uint32_t>(mel.window_length) }) {
        put_u32(out, v);
    }
    for (const double v : mel.data) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    }
    if (!out) {
        throw InputError("mel file: write failed for " + path.string());
    }
}

auto read_mel(const std::filesystem::path& path) -> MelSpectrogram
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("mel file: cannot open " + path.string());
    }
    if (get_u32(in) != mel_file_magic) {
        throw InputError("mel file: bad magic in " + path.string());
    }
    const std::uint32_t version = get_u32(in);
    if (version != mel_file_version) {
        throw InputError("mel file: unsupported version " + std::to_string(version));
    }
    MelSpectrogram mel;
    mel.num_frames = get_u32(in);
    mel.num_mels = get_u32(in);
    mel.sample_rate = static_cast<int>(get_u32(in));
    mel.hop_length = get_u32(in);
    mel.window_length = get_u32(in);
    mel.data.resize(mel.num_frames * mel.num_mels);
    for (auto& v : mel.data) {
        unsigned char b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) {
            throw InputError("mel file: truncated data in " + path.string());
        }
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        }
        std::memcpy(&v, &bits, sizeof v);
    }
    validate(mel);
    return mel;
}

} // namespace sentctx::features

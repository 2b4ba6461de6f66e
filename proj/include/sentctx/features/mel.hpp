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

#include <complex>
#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace sentctx::features {

struct FeatureConfig {
    int sample_rate = 22050;
    double frame_length_ms = 50.0;
    double frame_shift_ms = 12.5;
    std::size_t num_mels = 80;
    double log_floor = 1e-5;

    [[nodiscard]] auto window_samples() const -> std::size_t;
    [[nodiscard]] auto hop_samples() const -> std::size_t;
    /// Smallest power of two >= the window.
    [[nodiscard]] auto fft_size() const -> std::size_t;
    [[nodiscard]] auto num_bins() const -> std::size_t { return fft_size() / 2 + 1; }
    void validate() const;
};

/// Natural-log mel energies, row-major [frames x mels].
struct MelSpectrogram {
    std::size_t num_frames = 0;
    std::size_t num_mels = 0;
    std::vector<double> data;
    int sample_rate = 22050;
    std::size_t hop_length = 0;   // samples
    std::size_t window_length = 0; // samples

    MelSpectrogram() = default;
    MelSpectrogram(std::size_t frames, std::size_t mels, const FeatureConfig& config);

    [[nodiscard]] auto frame(std::size_t t) const -> std::span<const double>
    {
        return { data.data() + t * num_mels, num_mels };
    }
    [[nodiscard]] auto frame(std::size_t t) -> std::span<double>
    {
        return { data.data() + t * num_mels, num_mels };
    }
    [[nodiscard]] auto at(std::size_t t, std::size_t m) const -> double
    {
        return data[t * num_mels + m];
    }
    [[nodiscard]] auto frame_shift_ms() const -> double;
    [[nodiscard]] auto frame_length_ms() const -> double;
    [[nodiscard]] auto empty() const -> bool { return num_frames == 0; }
};

/// Throws InputError unless every value is finite and metadata is present.
void validate(const MelSpectrogram& mel);

/// 1 + floor((N - window) / hop); zero when N < window.
auto frame_count(std::size_t num_samples, const FeatureConfig& config) -> std::size_t;

/// Periodic Hann window of the configured length.
auto hann_window(std::size_t length) -> std::vector<double>;

/// Real-to-complex transform of fixed size backed by FFTW. Plans are
/// created under a global lock; execution is safe from any thread as long
/// as each thread owns its Fft.
class Fft {
public:
    explicit Fft(std::size_t size);
    ~Fft();
    Fft(const Fft&) = delete;
    auto operator=(const Fft&) -> Fft& = delete;

    [[nodiscard]] auto size() const -> std::size_t { return size_; }
    /// Input is zero-padded (or must fit) to size(); returns size()/2+1 bins.
    auto forward(std::span<const double> input) -> std::vector<std::complex<double>>;
    /// Inverse of forward, unnormalized by FFTW convention; divided by size() here.
    auto inverse(std::span<const std::complex<double>> bins) -> std::vector<double>;

private:
    struct Impl;
    std::size_t size_;
    std::unique_ptr<Impl> impl_;
};

/// Complex STFT, [frames][bins], no centering or padding.
auto stft(std::span<const double> samples, const FeatureConfig& config)
    -> std::vector<std::vector<std::complex<double>>>;

/// Least-squares overlap-add inverse of stft (window-squared normalization).
auto istft(const std::vector<std::vector<std::complex<double>>>& frames,
           const FeatureConfig& config) -> std::vector<double>;

/// HTK mel scale, 2595 log10(1 + f / 700).
auto hz_to_mel(double hz) -> double;
auto mel_to_hz(double mel) -> double;

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist,
/// unit peak, row-major [num_mels x num_bins].
auto mel_filterbank(const FeatureConfig& config) -> std::vector<double>;
/// Center frequency (Hz) of each filter.
auto mel_center_frequencies(const FeatureConfig& config) -> std::vector<double>;

/// |STFT| -> filterbank -> log(max(x, floor)).
auto mel_spectrogram(const Waveform& wav, const FeatureConfig& config) -> MelSpectrogram;

/// Flat binary: u32 magic, version, frames, mels, sample_rate, hop, window,
/// then frames*mels little-endian f64.
void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel);
auto read_mel(const std::filesystem::path& path) -> MelSpectrogram;

inline constexpr std::uint32_t mel_file_magic = 0x4C454D53; // "SMEL"
inline constexpr std::uint32_t mel_file_version = 1;

} // namespace sentctx::features

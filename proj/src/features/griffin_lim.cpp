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


#include "sentctx/features/griffin_lim.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

namespace sentctx::features {

auto config_for(const MelSpectrogram& mel) -> FeatureConfig
{
    FeatureConfig c;
    c.sample_rate = mel.sample_rate;
    c.num_mels = mel.num_mels;
    c.frame_length_ms = 1000.0 * static_cast<double>(mel.window_length) / mel.sample_rate;
    c.frame_shift_ms = 1000.0 * static_cast<double>(mel.hop_length) / mel.sample_rate;
    return c;
}

auto mel_to_linear_magnitude(const MelSpectrogram& mel, const FeatureConfig& config)
    -> std::vector<double>
{
    if (mel.num_mels != config.num_mels) {
        throw InputError("griffin-lim: mel has " + std::to_string(mel.num_mels)
                         + " bands, config expects " + std::to_string(config.num_mels));
    }
    const std::size_t bins = config.num_bins();
    const auto fb = mel_filterbank(config);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        f(fb.data(), static_cast<Eigen::Index>(config.num_mels), static_cast<Eigen::Index>(bins));
    const Eigen::MatrixXd pinv = f.completeOrthogonalDecomposition().pseudoInverse();
    Eigen::MatrixXd energies(static_cast<Eigen::Index>(config.num_mels),
                             static_cast<Eigen::Index>(mel.num_frames));
    for (std::size_t t = 0; t < mel.num_frames; ++t) {
        for (std::size_t m = 0; m < config.num_mels; ++m) {
            energies(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(t))
                = std::exp(mel.at(t, m));
        }
    }
    const Eigen::MatrixXd linear = pinv * energies; // [bins x frames]
    std::vector<double> out(mel.num_frames * bins);
    for (std::size_t t = 0; t < mel.num_frames; ++t) {
        for (std::size_t k = 0; k < bins; ++k) {
            out[t * bins + k] = std::max(
                0.0, linear(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)));
        }
    }
    return out;
}

auto griffin_lim(const MelSpectrogram& mel, const FeatureConfig& config,
                 const GriffinLimOptions& options) -> GriffinLimResult
{
    config.validate();
    validate(mel);
    if (mel.empty()) {
        throw InputError("griffin-lim: empty mel");
    }
    if (options.iterations < 1) {
        throw ConfigError("griffin-lim: need at least one iteration");
    }
    const std::size_t bins = config.num_bins();
    const std::size_t frames = mel.num_frames;
    const auto target = mel_to_linear_magnitude(mel, config);
    double target_norm = 0.0;
    for (const double v : target) {
        target_norm += v * v;
    }
    target_norm = std::sqrt(target_norm);

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<std::vector<std::complex<double>>> spec(frames,
                                                        std::vector<std::complex<double>>(bins));
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < bins; ++k) {
            spec[t][k] = std::polar(target[t * bins + k], phase(rng));
        }
    }

    GriffinLimResult result;
    result.waveform.sample_rate = config.sample_rate;
    for (std::size_t it = 0; it < options.iterations; ++it) {
        result.waveform.samples = istft(spec, config);
        const auto rebuilt = stft(result.waveform.samples, config);
        double err = 0.0;
        for (std::size_t t = 0; t < frames; ++t) {
            for (std::size_t k = 0; k < bins; ++k) {
                const double mag = std::abs(rebuilt[t][k]);
                const double d = mag - target[t * bins + k];
                err += d * d;
                const double angle = mag > 0.0 ? std::arg(rebuilt[t][k]) : 0.0;
                spec[t][k] = std::polar(target[t * bins + k], angle);
            }
        }
        result.spectral_convergence.push_back(target_norm > 0.0 ? std::sqrt(err) / target_norm
                                                                : std::sqrt(err));
    }
    result.waveform.samples = istft(spec, config);
    return result;
}

auto mel_spectral_convergence(const MelSpectrogram& target, const MelSpectrogram& actual) -> double
{
    if (target.num_mels != actual.num_mels) {
        throw InputError("spectral convergence: band counts differ");
    }
    const std::size_t frames = std::min(target.num_frames, actual.num_frames);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t m = 0; m < target.num_mels; ++m) {
            const double a = std::exp(target.at(t, m));
            const double b = std::exp(actual.at(t, m));
            num += (a - b) * (a - b);
            den += a * a;
        }
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace sentctx::features

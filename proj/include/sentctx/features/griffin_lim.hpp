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

#include "sentctx/features/mel.hpp"

#include <cstdint>
#include <vector>

namespace sentctx::features {

struct GriffinLimOptions {
    std::size_t iterations = 60;
    std::uint64_t seed = 1;
};

struct GriffinLimResult {
    Waveform waveform;
    /// ||(|STFT(x_i)| - S)|| / ||S|| after each iteration, S the target
    /// linear magnitude.
    std::vector<double> spectral_convergence;
};

/// Linear-magnitude target from log-mel frames: exp, then the
/// pseudo-inverse of the filterbank, clamped at zero. Row-major
/// [frames x bins].
auto mel_to_linear_magnitude(const MelSpectrogram& mel, const FeatureConfig& config)
    -> std::vector<double>;

/// Alternating projections between consistent STFTs and the target
/// magnitude, starting from seeded random phase.
auto griffin_lim(const MelSpectrogram& mel, const FeatureConfig& config,
                 const GriffinLimOptions& options = {}) -> GriffinLimResult;

/// ||exp(mel(x)) - exp(target)||_F / ||exp(target)||_F, comparing
/// min(T, T') frames in the linear mel domain.
auto mel_spectral_convergence(const MelSpectrogram& target, const MelSpectrogram& actual)
    -> double;

/// Config with the metadata a mel was computed with (rate, window, hop).
auto config_for(const MelSpectrogram& mel) -> FeatureConfig;

} // namespace sentctx::features

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

#include "sentctx/errors.hpp"

#include <filesystem>
#include <vector>

namespace sentctx::features {

struct Waveform {
    std::vector<double> samples; // in [-1, 1]
    int sample_rate = 22050;

    [[nodiscard]] auto duration_seconds() const -> double
    {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

/// The corpora use 22050 Hz or 16000 Hz.
auto is_supported_sample_rate(int rate) -> bool;
void validate(const Waveform& wav);

/// 16-bit PCM, mono, little-endian RIFF. Samples are clipped to [-1, 1]
/// on write.
void write_wav(const std::filesystem::path& path, const Waveform& wav);
auto read_wav(const std::filesystem::path& path) -> Waveform;

auto rms(const std::vector<double>& samples) -> double;

} // namespace sentctx::features

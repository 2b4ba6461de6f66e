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

#include <cstddef>
#include <utility>
#include <vector>

namespace sentctx::features {

struct MelCepstrum {
    std::size_t num_frames = 0;
    std::size_t num_coeffs = 0;
    std::vector<double> coeffs; // row-major [frames x coeffs]
    bool includes_c0 = true;

    [[nodiscard]] auto at(std::size_t t, std::size_t c) const -> double
    {
        return coeffs[t * num_coeffs + c];
    }
};

/// Orthonormal DCT-II of each log-mel frame, keeping the first `count`
/// coefficients (c0 included).
auto mel_cepstrum(const MelSpectrogram& mel, std::size_t count = 13) -> MelCepstrum;

struct DtwResult {
    double total_cost = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> path; // (ref, hyp), start to end
};

/// Minimum-total-cost monotone alignment with steps (1,0), (0,1), (1,1)
/// under Euclidean distance over coefficients [first, C).
auto dtw_align(const MelCepstrum& ref, const MelCepstrum& hyp, std::size_t first_coeff)
    -> DtwResult;

/// (10 / ln 10) * sqrt(2) * mean over DTW-aligned pairs of the Euclidean
/// distance between cepstra, c0 excluded when present.
auto mcd(const MelCepstrum& ref, const MelCepstrum& hyp) -> double;

} // namespace sentctx::features

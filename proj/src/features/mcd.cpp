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


#include "sentctx/features/mcd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace sentctx::features {

auto mel_cepstrum(const MelSpectrogram& mel, std::size_t count) -> MelCepstrum
{
    if (count < 2 || count > mel.num_mels) {
        throw ConfigError("mel cepstrum: coefficient count must be in [2, "
                          + std::to_string(mel.num_mels) + "]");
    }
    const std::size_t m = mel.num_mels;
    MelCepstrum out { mel.num_frames, count, std::vector<double>(mel.num_frames * count), true };
    std::vector<double> basis(count * m);
    for (std::size_t i = 0; i < count; ++i) {
        const double s = std::sqrt((i == 0 ? 1.0 : 2.0) / static_cast<double>(m));
        for (std::size_t j = 0; j < m; ++j) {
            basis[i * m + j] = s
                * std::cos(std::numbers::pi * static_cast<double>(i)
                           * (static_cast<double>(j) + 0.5) / static_cast<double>(m));
        }
    }
    for (std::size_t t = 0; t < mel.num_frames; ++t) {
        const auto row = mel.frame(t);
        for (std::size_t i = 0; i < count; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                acc += basis[i * m + j] * row[j];
            }
            out.coeffs[t * count + i] = acc;
        }
    }
    return out;
}

auto dtw_align(const MelCepstrum& ref, const MelCepstrum& hyp, std::size_t first_coeff)
    -> DtwResult
{
    if (ref.num_frames == 0 || hyp.num_frames == 0) {
        throw InputError("dtw: empty sequence");
    }
    if (ref.num_coeffs != hyp.num_coeffs) {
        throw InputError("dtw: coefficient counts differ (" + std::to_string(ref.num_coeffs)
                         + " vs " + std::to_string(hyp.num_coeffs) + ")");
    }
    const std::size_t n = ref.num_frames;
    const std::size_t m = hyp.num_frames;
    const auto dist = [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t c = first_coeff; c < ref.num_coeffs; ++c) {
            const double d = ref.at(i, c) - hyp.at(j, c);
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> cost(n * m, inf);
    // back-pointer: 0 diagonal, 1 from (i-1, j), 2 from (i, j-1)
    std::vector<unsigned char> from(n * m, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double local = dist(i, j);
            if (i == 0 && j == 0) {
                cost[0] = local;
                continue;
            }
            double best = inf;
            unsigned char move = 0;
            if (i > 0 && j > 0 && cost[(i - 1) * m + j - 1] < best) {
                best = cost[(i - 1) * m + j - 1];
                move = 0;
            }
            if (i > 0 && cost[(i - 1) * m + j] < best) {
                best = cost[(i - 1) * m + j];
                move = 1;
            }
            if (j > 0 && cost[i * m + j - 1] < best) {
                best = cost[i * m + j - 1];
                move = 2;
            }
            cost[i * m + j] = best + local;
            from[i * m + j] = move;
        }
    }
    DtwResult r;
    r.total_cost = cost[n * m - 1];
    std::size_t i = n - 1;
    std::size_t j = m - 1;
    r.path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        switch (from[i * m + j]) {
        case 0:
            --i;
            --j;
            break;
        case 1:
            --i;
            break;
        default:
            --j;
            break;
        }
        r.path.emplace_back(i, j);
    }
    std::reverse(r.path.begin(), r.path.end());
    return r;
}

auto mcd(const MelCepstrum& ref, const MelCepstrum& hyp) -> double
{
    if (ref.includes_c0 != hyp.includes_c0) {
        throw InputError("mcd: one cepstrum includes c0 and the other does not");
    }
    const std::size_t first = ref.includes_c0 ? 1 : 0;
    const auto aligned = dtw_align(ref, hyp, first);
    const double mean = aligned.total_cost / static_cast<double>(aligned.path.size());
    return 10.0 / std::numbers::ln10 * std::numbers::sqrt2 * mean;
}

} // namespace sentctx::features

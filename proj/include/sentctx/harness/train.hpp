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

#include "sentctx/harness/config.hpp"
#include "sentctx/harness/corpus.hpp"
#include "sentctx/harness/model.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sentctx::harness {

/// Training produced a non-finite loss or gradient.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& message, std::string parameter_block)
        : std::runtime_error(message)
        , block(std::move(parameter_block))
    {
    }
    std::string block;
};

struct LossRecord {
    std::size_t step = 0;
    double loss = 0.0;
};

struct TrainOptions {
    /// Directory for loss.tsv, periodic ckpt_<step>.bin and final.ckpt;
    /// nothing is written when absent.
    std::optional<std::filesystem::path> output_dir;
    /// Called after every optimizer step.
    std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
    std::vector<LossRecord> log; // batch loss before each update
    double initial_mel_loss = 0.0; // teacher-forced, averaged over the training set
    double final_mel_loss = 0.0;
};

/// Mean teacher-forced pre + post mel loss over `data`, no gradients.
auto teacher_forced_mel_loss(const AcousticModel& model, const std::vector<Utterance>& data)
    -> double;

/// Adam with global-norm clipping; batches are drawn from a seeded
/// permutation of the corpus, reshuffled every epoch.
auto train(AcousticModel& model, const TrainingConfig& config, const std::vector<Utterance>& data,
           const TrainOptions& options = {}) -> TrainResult;

/// `step<TAB>loss` lines with 17 significant digits.
void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

/// Name of the first parameter holding a non-finite value or gradient.
auto find_non_finite_parameter(const ParameterStore& store) -> std::optional<std::string>;

} // namespace sentctx::harness

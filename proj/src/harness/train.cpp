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


#include "sentctx/harness/train.hpp"

#include "sentctx/numcore/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace sentctx::harness {

namespace {

auto format_record(const LossRecord& r) -> std::string
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\n", r.step, r.loss);
    return buf;
}

auto divergence(const ParameterStore& store, std::size_t step, const std::string& detail)
    -> TrainingDiverged
{
    const auto block = find_non_finite_parameter(store);
    const std::string name = block ? *block : "<none: parameters finite, see op>";
    return { "non-finite training state at step " + std::to_string(step) + " in parameter block "
                 + name + ": " + detail,
             name };
}

} // namespace

auto find_non_finite_parameter(const ParameterStore& store) -> std::optional<std::string>
{
    const auto finite = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    for (const auto& p : store.parameters()) {
        if (!finite(p.tensor.values()) || (p.tensor.has_grad() && !finite(p.tensor.grad()))) {
            return p.name;
        }
    }
    return std::nullopt;
}

auto teacher_forced_mel_loss(const AcousticModel& model, const std::vector<Utterance>& data)
    -> double
{
    if (data.empty()) {
        throw InputError("training: empty corpus");
    }
    double total = 0.0;
    for (const auto& u : data) {
        total += model.loss(u.text, mel_to_tensor(u.mel)).mel();
    }
    return total / static_cast<double>(data.size());
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log)
{
    std::ofstream out(path);
    if (!out) {
        throw InputError("loss log: cannot write " + path.string());
    }
    for (const auto& r : log) {
        out << format_record(r);
    }
}

auto train(AcousticModel& model, const TrainingConfig& config, const std::vector<Utterance>& data,
           const TrainOptions& options) -> TrainResult
{
    config.validate();
    if (data.empty()) {
        throw InputError("training: empty corpus");
    }
    num::AdamConfig adam_config;
    adam_config.learning_rate = config.learning_rate;
    adam_config.warmup_steps = config.warmup_steps;
    adam_config.decay = config.decay;
    adam_config.clip_norm = config.clip_norm;
    num::Adam adam(model.store(), adam_config);

    std::vector<Tensor> targets;
    targets.reserve(data.size());
    for (const auto& u : data) {
        targets.push_back(mel_to_tensor(u.mel));
    }

    std::optional<std::ofstream> log_file;
    if (options.output_dir) {
        std::filesystem::create_directories(*options.output_dir);
        log_file.emplace(*options.output_dir / "loss.tsv");
        if (!*log_file) {
            throw InputError("training: cannot write loss log in " + options.output_dir->string());
        }
    }

    Rng order_rng(num::derive_seed(config.seed, "batches"));
    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size();

    TrainResult result;
    result.initial_mel_loss = teacher_forced_mel_loss(model, data);
    const double inv_batch = 1.0 / static_cast<double>(config.batch_size);
    for (std::size_t step = 0; step < config.steps; ++step) {
        model.store().zero_grad();
        double batch_loss = 0.0;
        try {
            num::Tape tape;
            Tensor total;
            for (std::size_t b = 0; b < config.batch_size; ++b) {
                if (cursor == order.size()) {
                    std::iota(order.begin(), order.end(), 0);
                    std::shuffle(order.begin(), order.end(), order_rng);
                    cursor = 0;
                }
                const std::size_t i = order[cursor++];
                const Tensor term = num::scale(model.loss(data[i].text, targets[i]).total, inv_batch);
                total = total.defined() ? num::add(total, term) : term;
            }
            batch_loss = total.item();
            tape.backward(total);
        } catch (const num::NumericError& e) {
            throw divergence(model.store(), step, e.what());
        }
        if (find_non_finite_parameter(model.store())) {
            throw divergence(model.store(), step, "gradient is not finite");
        }
        adam.step();

        const LossRecord record { step, batch_loss };
        result.log.push_back(record);
        if (log_file) {
            *log_file << format_record(record);
            log_file->flush();
        }
        if (options.on_step) {
            options.on_step(record);
        }
        if (options.output_dir && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0
            && step + 1 < config.steps) {
            save_checkpoint(*options.output_dir / ("ckpt_" + std::to_string(step + 1) + ".bin"),
                            model, step + 1);
        }
    }
    result.final_mel_loss = teacher_forced_mel_loss(model, data);
    if (options.output_dir) {
        save_checkpoint(*options.output_dir / "final.ckpt", model, config.steps);
    }
    return result;
}

} // namespace sentctx::harness

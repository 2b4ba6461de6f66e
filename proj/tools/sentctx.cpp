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
#include "sentctx/harness/config.hpp"
#include "sentctx/harness/corpus.hpp"
#include "sentctx/harness/evaluate.hpp"
#include "sentctx/harness/gradcheck_suite.hpp"
#include "sentctx/harness/model.hpp"
#include "sentctx/harness/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

using namespace sentctx;
using namespace sentctx::harness;
namespace fs = std::filesystem;

namespace {

struct TrainArgs {
    fs::path manifest;
    fs::path out;
    std::optional<fs::path> config;
    std::vector<std::string> overrides;
    bool quiet = false;
};

struct SynthArgs {
    fs::path checkpoint;
    fs::path symbols;
    fs::path out_mel;
    std::optional<fs::path> out_wav;
    std::size_t iterations = 60;
};

struct EvalArgs {
    std::vector<fs::path> checkpoints;
    fs::path manifest;
    fs::path out;
    std::vector<std::string> metrics { "mcd" };
    std::string protocol = "pooled";
    std::string corpus = "toy";
    bool inject = false;
    std::size_t threads = 0;
    std::size_t iterations = 32;
};

struct CorpusArgs {
    fs::path out;
    std::size_t count = 10;
    std::uint64_t seed = 1;
    int sample_rate = 22050;
};

auto run_train(const TrainArgs& a) -> int
{
    KeyValues kv;
    if (a.config) {
        kv = read_key_values(*a.config);
    }
    auto config = TrainingConfig::from_key_values(kv);
    for (const auto& o : a.overrides) {
        const auto [k, v] = parse_override(o);
        config.set(k, v);
    }
    config.validate();

    const auto manifest = CorpusManifest::load(a.manifest);
    const auto vocab = Vocabulary::load(manifest.vocabulary);
    const auto data = load_corpus(manifest, vocab);
    AcousticModel model(ModelConfig::from_training(config, vocab.size()), vocab, config.seed);

    fs::create_directories(a.out);
    {
        std::ofstream resolved(a.out / "train.conf");
        resolved << format_key_values(config.to_key_values());
    }
    TrainOptions options;
    options.output_dir = a.out;
    if (!a.quiet) {
        options.on_step = [&](const LossRecord& r) {
            if (r.step % 100 == 0 || r.step + 1 == config.steps) {
                std::printf("step %zu loss %.6f\n", r.step, r.loss);
                std::fflush(stdout);
            }
        };
    }
    const auto result = train(model, config, data, options);
    std::printf("mode %s: teacher-forced mel loss %.6f -> %.6f (%.2f%%)\n",
                std::string(to_string(config.mode)).c_str(), result.initial_mel_loss,
                result.final_mel_loss, 100.0 * result.final_mel_loss / result.initial_mel_loss);
    return 0;
}

auto run_synth(const SynthArgs& a) -> int
{
    const auto loaded = load_checkpoint(a.checkpoint);
    const auto text = read_symbol_file(a.symbols, loaded.model.vocabulary());
    const auto inference = loaded.model.infer(text);
    const auto mel = tensor_to_mel(inference.output.post_mel, loaded.model.config().features);
    std::optional<features::Waveform> wav;
    if (a.out_wav) {
        features::GriffinLimOptions gl;
        gl.iterations = a.iterations;
        wav = features::griffin_lim(mel, loaded.model.config().features, gl).waveform;
    }
    features::write_mel(a.out_mel, mel);
    if (wav) {
        features::write_wav(*a.out_wav, *wav);
    }
    std::printf("%zu frames%s\n", mel.num_frames, inference.stopped ? "" : " (reached max steps)");
    return 0;
}

auto run_eval(const EvalArgs& a) -> int
{
    EvalOptions options;
    options.mcd = false;
    for (const auto& m : a.metrics) {
        if (m == "mcd") {
            options.mcd = true;
        } else if (m == "prosody_corr") {
            options.prosody_correlation = true;
        } else if (m == "diversity") {
            options.diversity = true;
        } else {
            throw ConfigError("unknown metric '" + m + "' (expected mcd|prosody_corr|diversity)");
        }
    }
    options.protocol = prosody::parse_correlation_protocol(a.protocol);
    options.inject_references = a.inject;
    options.threads = a.threads;
    options.griffin_lim_iterations = a.iterations;

    const auto manifest = CorpusManifest::load(a.manifest);
    std::vector<SystemReport> reports;
    for (const auto& path : a.checkpoints) {
        const auto loaded = load_checkpoint(path);
        const auto data = load_corpus(manifest, loaded.model.vocabulary());
        const std::string system(system_name(loaded.model.config().context.mode));
        reports.push_back(evaluate(loaded.model, data, options, a.inject ? "REF" : system));
    }
    write_reports(a.out, a.corpus, reports);
    for (const auto& r : reports) {
        std::printf("%s", r.system.c_str());
        if (r.mcd) {
            std::printf(" mcd %.4f", *r.mcd);
        }
        if (r.correlation) {
            std::printf(" corr E %.4f Dur %.4f F0 %.4f", (*r.correlation)[0], (*r.correlation)[1],
                        (*r.correlation)[2]);
        }
        std::printf("\n");
    }
    return 0;
}

auto run_gen_corpus(const CorpusArgs& a) -> int
{
    ToyCorpusOptions options;
    options.num_utterances = a.count;
    options.seed = a.seed;
    options.features.sample_rate = a.sample_rate;
    const auto m = generate_toy_corpus(a.out, options);
    std::printf("%zu utterances in %s\n", m.entries.size(), (a.out / "manifest.tsv").c_str());
    return 0;
}

auto run_grad_check() -> int
{
    bool ok = true;
    for (const auto& m : run_module_gradchecks()) {
        std::printf("%-22s %s  max rel err %.3e\n", m.module.c_str(),
                    m.report.passed() ? "ok  " : "FAIL", m.report.max_relative_error());
        ok = ok && m.report.passed();
    }
    return ok ? 0 : 3;
}

/// One line on stderr: `error: <category>: <message>`.
auto fail(const std::string& category, const std::string& message, int code) -> int
{
    std::fprintf(stderr, "error: %s: %s\n", category.c_str(), message.c_str());
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app { "Sentence-context TTS acoustic model toolkit" };
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a corpus manifest");
    train_cmd->add_option("--manifest", train_args.manifest)->required();
    train_cmd->add_option("--out", train_args.out, "Output directory")->required();
    train_cmd->add_option("--config", train_args.config, "key = value config file");
    train_cmd->add_option("--set", train_args.overrides, "key=value override (repeatable)");
    train_cmd->add_flag("--quiet", train_args.quiet);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "Synthesize a mel (and optional WAV)");
    synth_cmd->add_option("--checkpoint", synth_args.checkpoint)->required();
    synth_cmd->add_option("--symbols", synth_args.symbols)->required();
    synth_cmd->add_option("--out-mel", synth_args.out_mel)->required();
    synth_cmd->add_option("--out-wav", synth_args.out_wav);
    synth_cmd->add_option("--griffin-lim-iters", synth_args.iterations);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score checkpoints against references");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoints, "Checkpoint (repeatable)")
        ->required();
    eval_cmd->add_option("--manifest", eval_args.manifest)->required();
    eval_cmd->add_option("--out", eval_args.out, "Report directory")->required();
    eval_cmd->add_option("--metrics", eval_args.metrics, "mcd, prosody_corr, diversity")
        ->delimiter(',');
    eval_cmd->add_option("--protocol", eval_args.protocol, "pooled | per_utterance");
    eval_cmd->add_option("--corpus", eval_args.corpus, "Row label of the MCD table");
    eval_cmd->add_flag("--inject-references", eval_args.inject);
    eval_cmd->add_option("--threads", eval_args.threads);
    eval_cmd->add_option("--griffin-lim-iters", eval_args.iterations);

    CorpusArgs corpus_args;
    auto* corpus_cmd = app.add_subcommand("gen-corpus", "Generate the synthetic toy corpus");
    corpus_cmd->add_option("--out", corpus_args.out)->required();
    corpus_cmd->add_option("--count", corpus_args.count);
    corpus_cmd->add_option("--seed", corpus_args.seed);
    corpus_cmd->add_option("--sample-rate", corpus_args.sample_rate);

    auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        return fail("usage", e.what(), 2);
    }

    try {
        if (*train_cmd) {
            return run_train(train_args);
        }
        if (*synth_cmd) {
            return run_synth(synth_args);
        }
        if (*eval_cmd) {
            return run_eval(eval_args);
        }
        if (*corpus_cmd) {
            return run_gen_corpus(corpus_args);
        }
        if (*grad_cmd) {
            return run_grad_check();
        }
    } catch (const CheckpointError& e) {
        return fail("checkpoint", e.what(), 4);
    } catch (const TrainingDiverged& e) {
        return fail("diverged", e.what(), 5);
    } catch (const prosody::UndefinedCorrelation& e) {
        return fail("undefined-correlation", e.what(), 6);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 7);
    } catch (const InputError& e) {
        return fail("input", e.what(), 8);
    } catch (const num::ShapeError& e) {
        return fail("shape", e.what(), 9);
    } catch (const num::NumericError& e) {
        return fail("numeric", e.what(), 10);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return 0;
}

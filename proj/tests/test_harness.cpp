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


#include "sentctx/harness/config.hpp"
#include "sentctx/harness/corpus.hpp"
#include "sentctx/harness/evaluate.hpp"
#include "sentctx/harness/model.hpp"
#include "sentctx/harness/train.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

using namespace sentctx;
using namespace sentctx::harness;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("sentctx_" + name))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

auto toy_model(AggregationMode mode, std::uint64_t seed = 1) -> AcousticModel
{
    auto t = TrainingConfig::for_preset(Preset::toy);
    t.mode = mode;
    t.max_decoder_steps = 30;
    const auto vocab = toy_vocabulary();
    return AcousticModel(ModelConfig::from_training(t, vocab.size()), vocab, seed);
}

auto toy_data(std::size_t n, std::uint64_t seed, std::size_t max_length = 8)
    -> std::vector<Utterance>
{
    ToyCorpusOptions o;
    o.max_length = max_length;
    std::vector<Utterance> data;
    for (std::size_t i = 0; i < n; ++i) {
        data.push_back(make_toy_utterance(seed, i, o));
    }
    return data;
}

auto bits_equal(std::span<const double> a, std::span<const double> b) -> bool
{
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("key-value config files with overrides")
{
    const auto kv = parse_key_values("# comment\npreset = toy\nmode=direct  # trailing\n\n"
                                     "steps = 12\nlearning_rate = 5e-4\n");
    CHECK(kv.at("mode") == "direct");
    auto c = TrainingConfig::from_key_values(kv);
    CHECK(c.mode == AggregationMode::direct);
    CHECK(c.steps == 12);
    CHECK(c.learning_rate == 5e-4);
    CHECK(c.model_dim == 64);
    CHECK(c.num_blocks == 2);

    const auto [k, v] = parse_override("steps=40");
    c.set(k, v);
    CHECK(c.steps == 40);
    CHECK_THROWS_AS(c.set("stepz", "1"), ConfigError);
    CHECK_THROWS_AS(c.set("steps", "-3"), ConfigError);
    CHECK_THROWS_AS(c.set("mode", "mean"), ConfigError);
    CHECK_THROWS_AS(parse_override("steps"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("no equals sign\n"), ConfigError);

    const auto again = TrainingConfig::from_key_values(c.to_key_values());
    CHECK(again.to_key_values() == c.to_key_values());
}

TEST_CASE("presets")
{
    const auto toy = TrainingConfig::for_preset(Preset::toy);
    CHECK(toy.model_dim <= 64);
    CHECK(toy.num_blocks <= 2);
    CHECK(toy.learning_rate == 1e-3);
    CHECK(toy.clip_norm == 1.0);
    const auto paper = TrainingConfig::for_preset(Preset::paper);
    CHECK(paper.model_dim == 512);
    CHECK(paper.num_blocks == 6);
    CHECK(paper.num_heads == 8);
    CHECK(paper.ffn_dim == 2048);
    CHECK(paper.learning_rate == 1e-4);
    CHECK(paper.warmup_steps > 0);

    const auto m = ModelConfig::from_training(paper, 30);
    CHECK(m.decoder.num_mels == 80);
    CHECK(m.context.memory_slots() == 8);
    const auto back = ModelConfig::from_key_values(m.to_key_values());
    CHECK(back.to_key_values() == m.to_key_values());
}

TEST_CASE("toy corpus is deterministic and its alignments tile the mel")
{
    ToyCorpusOptions o;
    for (std::size_t i = 0; i < 12; ++i) {
        const auto a = make_toy_utterance(9, i, o);
        const auto b = make_toy_utterance(9, i, o);
        CHECK(a.text.tokens == b.text.tokens);
        CHECK(bits_equal(a.mel.data, b.mel.data));
        REQUIRE(a.alignment);
        CHECK_NOTHROW(a.alignment->validate(a.mel.num_frames));
        CHECK(a.alignment->total_frames() == a.mel.num_frames);
        CHECK(a.alignment->entries.front().start == 0);
        CHECK(a.alignment->entries.back().end == a.mel.num_frames);
        CHECK(a.alignment->entries.size() == a.text.length());
        const std::size_t phones = a.text.length() - 1;
        CHECK(phones >= 5);
        CHECK(phones <= 20);
    }
    CHECK(make_toy_utterance(9, 0, o).text.tokens != make_toy_utterance(10, 0, o).text.tokens);
}

TEST_CASE("per-symbol mean mel stripes are separated")
{
    ToyCorpusOptions o;
    std::map<std::string, std::vector<double>> sums;
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < 30; ++i) {
        const auto u = make_toy_utterance(4, i, o);
        for (const auto& e : u.alignment->entries) {
            auto& s = sums[e.label];
            s.resize(u.mel.num_mels, 0.0);
            for (std::size_t t = e.start; t < e.end; ++t) {
                for (std::size_t m = 0; m < u.mel.num_mels; ++m) {
                    s[m] += u.mel.at(t, m);
                }
            }
            counts[e.label] += e.end - e.start;
        }
    }
    std::vector<std::vector<double>> means;
    for (auto& [label, s] : sums) {
        if (label.starts_with("p")) {
            for (auto& v : s) {
                v /= static_cast<double>(counts[label]);
            }
            means.push_back(s);
        }
    }
    REQUIRE(means.size() == 12);
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < means.size(); ++a) {
        for (std::size_t b = a + 1; b < means.size(); ++b) {
            double d = 0.0;
            for (std::size_t m = 0; m < means[a].size(); ++m) {
                d += (means[a][m] - means[b][m]) * (means[a][m] - means[b][m]);
            }
            closest = std::min(closest, std::sqrt(d));
        }
    }
    CHECK(closest > 2.0);
}

TEST_CASE("generated corpus round-trips through the manifest")
{
    TempDir dir("corpus");
    ToyCorpusOptions o;
    o.num_utterances = 3;
    o.seed = 2;
    const auto m = generate_toy_corpus(dir.path, o);
    const auto loaded = CorpusManifest::load(dir.path / "manifest.tsv");
    REQUIRE(loaded.entries.size() == 3);
    const auto vocab = Vocabulary::load(loaded.vocabulary);
    CHECK(vocab == toy_vocabulary());
    const auto data = load_corpus(loaded, vocab);
    const auto direct = make_toy_utterance(2, 1, o);
    CHECK(data[1].text.tokens == direct.text.tokens);
    CHECK(bits_equal(data[1].mel.data, direct.mel.data));
    CHECK(data[1].alignment->entries.size() == direct.alignment->entries.size());
    REQUIRE(data[1].wav);
    CHECK(data[1].wav->samples.size() == direct.wav->samples.size());

    auto dup = loaded;
    dup.entries.push_back(dup.entries.front());
    CHECK_THROWS_AS(dup.validate(), InputError);
    fs::remove(loaded.entries[2].mel);
    const std::string id = loaded.entries[2].id;
    CHECK_THROWS_WITH_AS(CorpusManifest::load(dir.path / "manifest.tsv"),
                         doctest::Contains(id.c_str()), InputError);
}

TEST_CASE("only the aggregation block differs between systems")
{
    const auto none = toy_model(AggregationMode::none);
    const auto direct = toy_model(AggregationMode::direct);
    const auto weighted = toy_model(AggregationMode::weighted);
    CHECK(none.store().scalar_count("context") == 0);
    CHECK(weighted.store().scalar_count() - none.store().scalar_count()
          == weighted.store().scalar_count("context"));
    CHECK(direct.store().scalar_count() - none.store().scalar_count()
          == direct.store().scalar_count("context"));
    for (const auto* prefix : { "encoder", "decoder" }) {
        const auto a = none.store().select(prefix);
        const auto b = weighted.store().select(prefix);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].name == b[i].name);
            CHECK(a[i].tensor.shape() == b[i].tensor.shape());
            // same seed: same initial values outside the aggregation block
            CHECK(bits_equal(a[i].tensor.values(), b[i].tensor.values()));
        }
    }
}

TEST_CASE("checkpoints round-trip bit-exactly")
{
    TempDir dir("ckpt");
    const auto model = toy_model(AggregationMode::weighted, 5);
    const auto data = toy_data(2, 6);
    save_checkpoint(dir.path / "m.ckpt", model, 17);
    const auto loaded = load_checkpoint(dir.path / "m.ckpt");
    CHECK(loaded.step == 17);
    CHECK(loaded.model.vocabulary() == model.vocabulary());
    CHECK(loaded.model.config().to_key_values() == model.config().to_key_values());
    const auto& a = model.store().parameters();
    const auto& b = loaded.model.store().parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(bits_equal(a[i].tensor.values(), b[i].tensor.values()));
    }
    const double before = teacher_forced_mel_loss(model, data);
    const double after = teacher_forced_mel_loss(loaded.model, data);
    CHECK(std::memcmp(&before, &after, sizeof before) == 0);
    const auto m1 = model.synthesize(data[0].text);
    const auto m2 = loaded.model.synthesize(data[0].text);
    CHECK(bits_equal(m1.data, m2.data));
}

TEST_CASE("damaged checkpoints are rejected")
{
    TempDir dir("badckpt");
    const auto model = toy_model(AggregationMode::direct);
    const auto path = dir.path / "m.ckpt";
    save_checkpoint(path, model);
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 100);
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    {
        std::ofstream out(path, std::ios::binary);
        out << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), CheckpointError);
}

TEST_CASE("training is reproducible and writes its log and checkpoints")
{
    TempDir dir("train");
    const auto data = toy_data(3, 7);
    auto config = TrainingConfig::for_preset(Preset::toy);
    config.steps = 6;
    config.batch_size = 2;
    config.checkpoint_every = 3;
    auto m1 = toy_model(AggregationMode::weighted, 3);
    auto m2 = toy_model(AggregationMode::weighted, 3);
    TrainOptions options;
    options.output_dir = dir.path;
    const auto r1 = train(m1, config, data, options);
    const auto r2 = train(m2, config, data);
    REQUIRE(r1.log.size() == 6);
    for (std::size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].step == i);
        CHECK(std::memcmp(&r1.log[i].loss, &r2.log[i].loss, sizeof(double)) == 0);
    }
    CHECK(fs::exists(dir.path / "ckpt_3.bin"));
    CHECK(fs::exists(dir.path / "final.ckpt"));
    std::ifstream log(dir.path / "loss.tsv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        const auto tab = line.find('\t');
        REQUIRE(tab != std::string::npos);
        CHECK(std::stoul(line.substr(0, tab)) == lines);
        CHECK(std::stod(line.substr(tab + 1)) == r1.log[lines].loss);
        ++lines;
    }
    CHECK(lines == 6);
    const auto final_model = load_checkpoint(dir.path / "final.ckpt");
    CHECK(final_model.step == 6);
    CHECK(teacher_forced_mel_loss(final_model.model, data) == r1.final_mel_loss);
}

TEST_CASE("a non-finite parameter aborts training and is named")
{
    const auto data = toy_data(1, 8);
    auto config = TrainingConfig::for_preset(Preset::toy);
    config.steps = 3;
    auto model = toy_model(AggregationMode::direct);
    const auto* p = model.store().find("decoder.frame_proj.w");
    REQUIRE(p != nullptr);
    // poison after the initial loss so the failure happens inside a step
    TrainOptions options;
    options.on_step = [&](const LossRecord&) {
        p->tensor.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
    };
    try {
        (void)train(model, config, data, options);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.block == "decoder.frame_proj.w");
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("evaluation against injected references is perfect")
{
    const auto model = toy_model(AggregationMode::none);
    const auto data = toy_data(4, 11, 10);
    EvalOptions options;
    options.prosody_correlation = true;
    options.diversity = true;
    options.inject_references = true;
    const auto report = evaluate(model, data, options, "SA");
    REQUIRE(report.mcd);
    CHECK(*report.mcd == 0.0);
    REQUIRE(report.correlation);
    for (const double r : *report.correlation) {
        CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK((*report.diversity)[1] == (*report.reference_diversity)[1]);

    auto missing = data;
    missing[2].alignment.reset();
    missing[3].wav.reset();
    const std::string ids = data[2].id + ", " + data[3].id;
    CHECK_THROWS_WITH_AS(evaluate(model, missing, options, "SA"), doctest::Contains(ids.c_str()),
                         InputError);
    options.mcd = options.prosody_correlation = options.diversity = false;
    CHECK_THROWS_AS(evaluate(model, data, options, "SA"), ConfigError);
}

TEST_CASE("evaluation of a model is deterministic across thread counts")
{
    const auto model = toy_model(AggregationMode::weighted, 2);
    const auto data = toy_data(3, 12, 6);
    EvalOptions one;
    one.threads = 1;
    one.prosody_correlation = true;
    one.griffin_lim_iterations = 4;
    EvalOptions three = one;
    three.threads = 3;
    const auto a = evaluate(model, data, one, "SA-WA");
    const auto b = evaluate(model, data, three, "SA-WA");
    CHECK(*a.mcd == *b.mcd);
    CHECK(*a.mcd > 0.0);
    for (const auto& u : a.utterances) {
        CHECK(u.frames <= model.config().decoder.max_steps * model.config().decoder.reduction_factor);
    }
}

TEST_CASE("attention alignment to phoneme spans")
{
    DecoderOutput out;
    out.post_mel = Tensor({ 7, 2 }, 0.0);
    // steps attend 0, 0, 2, 1 (held at 2), with r = 2 and 7 frames
    for (const std::size_t peak : { 0, 0, 2, 1 }) {
        Tensor w({ 1, 4 }, 0.1);
        w.mutable_values()[peak] = 0.7;
        out.alignments.push_back(w);
    }
    const auto spans = alignment_from_attention(out, 2, { "a", "b", "c", "d" });
    REQUIRE(spans.size() == 4);
    REQUIRE(spans[0]);
    CHECK(spans[0]->start == 0);
    CHECK(spans[0]->end == 4);
    CHECK_FALSE(spans[1]);
    REQUIRE(spans[2]);
    CHECK(spans[2]->start == 4);
    CHECK(spans[2]->end == 7);
    CHECK_FALSE(spans[3]);
}

TEST_CASE("report tables mirror the published layouts")
{
    TempDir dir("reports");
    SystemReport sa { "SA", 5.0, std::array<double, 3> { 0.1, 0.2, 0.3 },
                      std::array<double, 3> { 1, 2, 3 }, std::array<double, 3> { 4, 5, 6 }, {} };
    SystemReport wa { "SA-WA", 4.5, std::array<double, 3> { 0.4, 0.5, 0.6 },
                      std::array<double, 3> { 7, 8, 9 }, std::array<double, 3> { 4, 5, 6 }, {} };
    write_reports(dir.path, "toy", { sa, wa });
    const auto read = [&](const char* name) {
        std::ifstream in(dir.path / name);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    CHECK(read("mcd.tsv") == "Corpus\tSA\tSA-WA\ntoy\t5.0000\t4.5000\n");
    CHECK(read("correlation.tsv").starts_with("\tSA\tSA-WA\nE\t0.1000\t0.4000\nDur.\t"));
    CHECK(read("diversity.tsv").starts_with("\tSA\tSA-WA\tGT\nE\t1.0000\t7.0000\t4.0000\n"));
}

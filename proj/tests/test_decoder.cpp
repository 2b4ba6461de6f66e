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


#include "sentctx/decoder/decoder.hpp"
#include "sentctx/numcore/gradcheck.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sentctx;
namespace ops = sentctx::num;

namespace {

auto tiny_config(std::size_t r = 1) -> DecoderConfig
{
    DecoderConfig c;
    c.memory_dim = 4;
    c.num_mels = 3;
    c.prenet_dims = { 4, 4 };
    c.recurrent_dims = { 5, 5 };
    c.reduction_factor = r;
    c.postnet_layers = 2;
    c.postnet_channels = 3;
    c.postnet_kernel = 3;
    c.attention_mixtures = 2;
    c.attention_hidden = 3;
    c.max_steps = 50;
    return c;
}

auto param(const ParameterStore& store, const std::string& name) -> Tensor
{
    const auto* p = store.find(name);
    REQUIRE(p != nullptr);
    return p->tensor;
}

auto sigmoid(double x) -> double { return 1.0 / (1.0 + std::exp(-x)); }
auto softplus(double x) -> double { return std::log1p(std::exp(x)); }

struct LstmOracle {
    oracle::Vec h;
    oracle::Vec c;
};

auto lstm_oracle(const ParameterStore& store, const std::string& name, const oracle::Vec& x,
                 const LstmOracle& s) -> LstmOracle
{
    oracle::Vec in = x;
    in.insert(in.end(), s.h.begin(), s.h.end());
    const auto z = oracle::affine(in, param(store, name + ".gates.w"), param(store, name + ".gates.b"));
    const std::size_t n = s.h.size();
    LstmOracle out { oracle::Vec(n), oracle::Vec(n) };
    for (std::size_t i = 0; i < n; ++i) {
        const double ig = sigmoid(z[i]);
        const double fg = sigmoid(z[n + i]);
        const double g = std::tanh(z[2 * n + i]);
        const double og = sigmoid(z[3 * n + i]);
        out.c[i] = fg * s.c[i] + ig * g;
        out.h[i] = og * std::tanh(out.c[i]);
    }
    return out;
}

void zero_all(const ParameterStore& store)
{
    for (const auto& p : store.parameters()) {
        std::fill(p.tensor.mutable_values().begin(), p.tensor.mutable_values().end(), 0.0);
    }
}

} // namespace

TEST_CASE("teacher-forced output length equals the target length for every reduction")
{
    for (const std::size_t r : { 1u, 2u, 3u }) {
        ParameterStore store;
        Rng rng(1);
        const Decoder dec(tiny_config(r), store, rng);
        Rng data(2);
        const Tensor memory = num::normal({ 5, 4 }, 1.0, data);
        for (std::size_t t = 1; t <= 7; ++t) {
            const auto out = dec.teacher_forced_forward(memory, num::normal({ t, 3 }, 1.0, data));
            CHECK(out.pre_mel.shape() == num::Shape{ t, 3 });
            CHECK(out.post_mel.shape() == num::Shape{ t, 3 });
            CHECK(out.stop_logits.shape() == num::Shape{ t, 1 });
            CHECK(out.steps == (t + r - 1) / r);
        }
    }
}

TEST_CASE("with every parameter zeroed the postnet is an identity residual")
{
    ParameterStore store;
    Rng rng(3);
    const Decoder dec(tiny_config(2), store, rng);
    zero_all(store);
    Rng data(4);
    const auto out = dec.teacher_forced_forward(num::normal({ 3, 4 }, 1.0, data),
                                                num::normal({ 5, 3 }, 1.0, data));
    CHECK(out.post_mel.values().size() == out.pre_mel.values().size());
    CHECK(std::equal(out.post_mel.values().begin(), out.post_mel.values().end(),
                     out.pre_mel.values().begin()));
}

TEST_CASE("tiny decoder matches a scalar step-by-step rollout")
{
    ParameterStore store;
    Rng rng(5);
    const auto cfg = tiny_config(1);
    const Decoder dec(cfg, store, rng);
    Rng data(6);
    const Tensor memory = num::normal({ 3, 4 }, 1.0, data);
    const Tensor target = num::normal({ 3, 3 }, 1.0, data);
    const auto out = dec.teacher_forced_forward(memory, target);

    const auto mem = oracle::to_matrix(memory);
    const auto tgt = oracle::to_matrix(target);
    LstmOracle att { oracle::Vec(5, 0.0), oracle::Vec(5, 0.0) };
    LstmOracle drnn { oracle::Vec(5, 0.0), oracle::Vec(5, 0.0) };
    oracle::Vec context(4, 0.0);
    oracle::Vec means(2, 0.0);
    oracle::Vec pre_flat;
    for (std::size_t s = 0; s < 3; ++s) {
        const oracle::Vec prev = s == 0 ? oracle::Vec(3, 0.0) : tgt[s - 1];
        const auto p0 = oracle::relu(oracle::affine(prev, param(store, "decoder.prenet0.w"),
                                                    param(store, "decoder.prenet0.b")));
        const auto p1 = oracle::relu(oracle::affine(p0, param(store, "decoder.prenet1.w"),
                                                    param(store, "decoder.prenet1.b")));
        oracle::Vec x = p1;
        x.insert(x.end(), context.begin(), context.end());
        att = lstm_oracle(store, "decoder.attention_rnn", x, att);

        oracle::Vec hid = oracle::affine(att.h, param(store, "decoder.attention.mlp1.w"),
                                         param(store, "decoder.attention.mlp1.b"));
        for (auto& v : hid) {
            v = std::tanh(v);
        }
        const auto raw = oracle::affine(hid, param(store, "decoder.attention.mlp2.w"),
                                        param(store, "decoder.attention.mlp2.b"));
        const double mx = std::max(raw[0], raw[1]);
        const double z = std::exp(raw[0] - mx) + std::exp(raw[1] - mx);
        oracle::Vec weights(3, 0.0);
        for (std::size_t k = 0; k < 2; ++k) {
            const double wk = std::exp(raw[k] - mx) / z;
            means[k] += softplus(raw[2 + k]);
            const double sigma = softplus(raw[4 + k]) + 1e-4;
            for (std::size_t j = 0; j < 3; ++j) {
                const double a = (static_cast<double>(j) + 0.5 - means[k]) / (sigma * std::sqrt(2.0));
                const double b = (static_cast<double>(j) - 0.5 - means[k]) / (sigma * std::sqrt(2.0));
                weights[j] += wk * 0.5 * (std::erf(a) - std::erf(b));
            }
        }
        CHECK(std::abs(out.means[s][0] - means[0]) <= 1e-12);
        CHECK(std::abs(out.means[s][1] - means[1]) <= 1e-12);
        context.assign(4, 0.0);
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::size_t c = 0; c < 4; ++c) {
                context[c] += weights[j] * mem[j][c];
            }
        }
        oracle::Vec y = att.h;
        y.insert(y.end(), context.begin(), context.end());
        drnn = lstm_oracle(store, "decoder.decoder_rnn", y, drnn);
        oracle::Vec head = drnn.h;
        head.insert(head.end(), context.begin(), context.end());
        const auto frame = oracle::affine(head, param(store, "decoder.frame_proj.w"),
                                          param(store, "decoder.frame_proj.b"));
        const auto stop = oracle::affine(head, param(store, "decoder.stop_proj.w"),
                                         param(store, "decoder.stop_proj.b"));
        for (std::size_t m = 0; m < 3; ++m) {
            CHECK(std::abs(out.pre_mel.at(s, m) - frame[m]) <= 1e-12);
        }
        CHECK(std::abs(out.stop_logits.at(s, 0) - stop[0]) <= 1e-12);
        pre_flat.insert(pre_flat.end(), frame.begin(), frame.end());
    }
    // postnet: conv -> tanh -> conv, plus the residual
    const Tensor pre({ 3, 3 }, pre_flat);
    auto h = oracle::conv1d_same(pre, param(store, "decoder.postnet0.w"),
                                 param(store, "decoder.postnet0.b"));
    for (auto& v : h) {
        v = std::tanh(v);
    }
    const auto post = oracle::add(oracle::conv1d_same(Tensor({ 3, 3 }, h),
                                                      param(store, "decoder.postnet1.w"),
                                                      param(store, "decoder.postnet1.b")),
                                  pre_flat);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(std::abs(out.post_mel.values()[i] - post[i]) <= 1e-12);
    }
}

TEST_CASE("a stop head that fires at once yields one group of frames")
{
    for (const std::size_t r : { 1u, 2u, 3u }) {
        ParameterStore store;
        Rng rng(7);
        const Decoder dec(tiny_config(r), store, rng);
        std::fill(dec.stop_projection().bias.mutable_values().begin(),
                  dec.stop_projection().bias.mutable_values().end(), 50.0);
        std::fill(dec.stop_projection().weight.mutable_values().begin(),
                  dec.stop_projection().weight.mutable_values().end(), 0.0);
        Rng data(8);
        const auto result = dec.infer(num::normal({ 4, 4 }, 1.0, data));
        CHECK(result.stopped);
        CHECK(result.output.steps == 1);
        CHECK(result.output.post_mel.rows() == r);
    }
}

TEST_CASE("a stop head that never fires runs exactly max_steps")
{
    ParameterStore store;
    Rng rng(9);
    auto cfg = tiny_config(2);
    cfg.max_steps = 10;
    const Decoder dec(cfg, store, rng);
    std::fill(dec.stop_projection().bias.mutable_values().begin(),
              dec.stop_projection().bias.mutable_values().end(), -50.0);
    std::fill(dec.stop_projection().weight.mutable_values().begin(),
              dec.stop_projection().weight.mutable_values().end(), 0.0);
    Rng data(10);
    const auto result = dec.infer(num::normal({ 4, 4 }, 1.0, data));
    CHECK_FALSE(result.stopped);
    CHECK(result.output.steps == 10);
    CHECK(result.output.post_mel.rows() == 20);
    CHECK(dec.infer(num::normal({ 4, 4 }, 1.0, data), 3).output.steps == 3);
}

TEST_CASE("inference terminates, means never move back and stop probabilities stay in (0,1)")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ParameterStore store;
        Rng rng(seed);
        auto cfg = tiny_config(1 + seed % 3);
        cfg.max_steps = 15;
        const Decoder dec(cfg, store, rng);
        Rng data(seed + 100);
        const auto result = dec.infer(num::normal({ 6, 4 }, 1.0, data));
        CHECK(result.output.steps <= 15);
        for (std::size_t s = 1; s < result.output.means.size(); ++s) {
            for (std::size_t k = 0; k < 2; ++k) {
                CHECK(result.output.means[s][k] >= result.output.means[s - 1][k]);
            }
        }
        for (const double logit : result.output.stop_logits.values()) {
            const double p = sigmoid(logit);
            CHECK(p > 0.0);
            CHECK(p < 1.0);
        }
    }
}

TEST_CASE("loss combines both mel errors and a final-frame stop target")
{
    ParameterStore store;
    Rng rng(11);
    const Decoder dec(tiny_config(2), store, rng);
    Rng data(12);
    const Tensor target = num::normal({ 4, 3 }, 1.0, data);
    const auto out = dec.teacher_forced_forward(num::normal({ 3, 4 }, 1.0, data), target);
    const auto l = dec.loss(out, target);
    double pre = 0.0;
    double post = 0.0;
    for (std::size_t i = 0; i < 12; ++i) {
        pre += std::pow(out.pre_mel.values()[i] - target.values()[i], 2) / 12.0;
        post += std::pow(out.post_mel.values()[i] - target.values()[i], 2) / 12.0;
    }
    double stop = 0.0;
    for (std::size_t t = 0; t < 4; ++t) {
        const double p = sigmoid(out.stop_logits.at(t, 0));
        stop -= (t == 3 ? std::log(p) : std::log(1.0 - p)) / 4.0;
    }
    CHECK(l.pre_mel == doctest::Approx(pre).epsilon(1e-12));
    CHECK(l.post_mel == doctest::Approx(post).epsilon(1e-12));
    CHECK(l.stop == doctest::Approx(stop).epsilon(1e-12));
    CHECK(l.total.item() == doctest::Approx(pre + post + stop).epsilon(1e-12));
}

TEST_CASE("decoder rejects empty inputs and mismatched shapes")
{
    ParameterStore store;
    Rng rng(13);
    const Decoder dec(tiny_config(), store, rng);
    Rng data(14);
    const Tensor memory = num::normal({ 3, 4 }, 1.0, data);
    CHECK_THROWS_AS((void)dec.teacher_forced_forward(Tensor({ 0, 4 }), Tensor({ 2, 3 }, 0.0)),
                    InputError);
    CHECK_THROWS_AS((void)dec.teacher_forced_forward(memory, Tensor({ 0, 3 })), InputError);
    CHECK_THROWS_AS((void)dec.teacher_forced_forward(memory, Tensor({ 2, 5 }, 0.0)),
                    num::ShapeError);
    CHECK_THROWS_AS((void)dec.infer(Tensor({ 3, 5 }, 0.0)), num::ShapeError);
    auto bad = tiny_config();
    bad.stop_threshold = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("decoder gradients match finite differences")
{
    ParameterStore store;
    Rng rng(15);
    const Decoder dec(tiny_config(2), store, rng);
    // zero biases put the first step's prenet exactly on the ReLU kink
    // (its input frame is all zeros); move them off it
    Rng shift(17);
    for (const auto& p : store.parameters()) {
        if (p.name.ends_with(".b")) {
            for (auto& v : p.tensor.mutable_values()) {
                v += std::uniform_real_distribution<double>(0.1, 0.3)(shift);
            }
        }
    }
    Rng data(16);
    const Tensor memory = num::normal({ 4, 4 }, 1.0, data);
    const Tensor target = num::normal({ 5, 3 }, 1.0, data);
    const auto report = num::check_gradients(
        [&](const Tensor& m) { return dec.loss(dec.teacher_forced_forward(m, target), target).total; },
        memory, store.parameters());
    INFO(report.summary());
    CHECK(report.passed());
}

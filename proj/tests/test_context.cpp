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


#include "sentctx/context/context.hpp"
#include "sentctx/numcore/gradcheck.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sentctx;
namespace ops = sentctx::num;

namespace {

auto make_config(AggregationMode mode, std::size_t blocks, std::size_t dim, std::size_t heads = 2)
    -> ContextConfig
{
    ContextConfig c;
    c.mode = mode;
    c.model_dim = dim;
    c.num_blocks = blocks;
    c.attention_heads = heads;
    c.ffn_inner_dim = 2 * dim;
    return c;
}

auto random_set(std::size_t count, std::size_t dim, std::uint64_t seed) -> LayerContextSet
{
    Rng rng(seed);
    LayerContextSet set;
    for (std::size_t i = 0; i < count; ++i) {
        set.contexts.push_back(num::normal({ 1, dim }, 1.0, rng));
    }
    return set;
}

auto random_stack(std::size_t blocks, std::size_t len, std::size_t dim, std::uint64_t seed)
    -> EncoderStackOutput
{
    Rng rng(seed);
    EncoderStackOutput out;
    for (std::size_t l = 0; l <= blocks; ++l) {
        out.layer_outputs.push_back(num::normal({ len, dim }, 1.0, rng));
    }
    return out;
}

auto max_abs_diff(const Tensor& t, const oracle::Vec& flat) -> double
{
    REQUIRE(t.numel() == flat.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        worst = std::max(worst, std::abs(t.values()[i] - flat[i]));
    }
    return worst;
}

void fill(const Tensor& t, double v)
{
    std::fill(t.mutable_values().begin(), t.mutable_values().end(), v);
}

auto readout(const Tensor& y, std::uint64_t seed) -> Tensor
{
    Rng rng(seed);
    return ops::sum(ops::mul(y, num::normal(y.shape(), 1.0, rng)));
}

/// LN(FFN(c) + c) on plain vectors.
auto ffn_stage(const ContextAggregator& agg, const oracle::Vec& c) -> oracle::Vec
{
    const auto& f = agg.ffn();
    const auto y = oracle::ffn(c, f.inner.weight, f.inner.bias, f.outer.weight, f.outer.bias);
    return oracle::layer_norm(oracle::add(y, c), agg.ffn_norm().gain, agg.ffn_norm().bias,
                              num::layer_norm_epsilon);
}

auto to_sets(const Tensor& stacked) -> LayerContextSet
{
    LayerContextSet set;
    for (std::size_t r = 0; r < stacked.rows(); ++r) {
        set.contexts.push_back(ops::slice(stacked, 0, r, 1));
    }
    return set;
}

} // namespace

TEST_CASE("aggregation mode names")
{
    CHECK(parse_aggregation_mode("weighted") == AggregationMode::weighted);
    CHECK(system_name(AggregationMode::none) == "SA");
    CHECK(system_name(AggregationMode::direct) == "SA-DA");
    CHECK(system_name(AggregationMode::weighted) == "SA-WA");
    CHECK_THROWS_AS(parse_aggregation_mode("both"), ConfigError);
}

TEST_CASE("extractor on a single frame is the conv output of that frame")
{
    ParameterStore store;
    Rng rng(1);
    const ContextAggregator agg(make_config(AggregationMode::direct, 1, 4), store, rng);
    const Tensor x = Tensor::matrix({ { 0.5, -1.0, 2.0, 0.25 } });
    const Tensor g = agg.extract_layer_context(x, 1);
    const auto& conv = agg.extractor(1);
    CHECK(max_abs_diff(g, oracle::conv1d_same(x, conv.weight, conv.bias)) <= 1e-14);
}

TEST_CASE("identity-initialized extractor returns a repeated row")
{
    ParameterStore store;
    Rng rng(2);
    const ContextAggregator agg(make_config(AggregationMode::direct, 1, 3), store, rng);
    const auto& conv = agg.extractor(0);
    fill(conv.weight, 0.0);
    fill(conv.bias, 0.0);
    auto w = conv.weight.mutable_values();
    for (std::size_t c = 0; c < 3; ++c) {
        w[(1 * 3 + c) * 3 + c] = 1.0; // centre tap
    }
    const Tensor x = Tensor::matrix({ { 1.5, -2.0, 0.5 }, { 1.5, -2.0, 0.5 }, { 1.5, -2.0, 0.5 },
                                      { 1.5, -2.0, 0.5 } });
    CHECK(max_abs_diff(agg.extract_layer_context(x, 0), { 1.5, -2.0, 0.5 }) <= 1e-15);
}

TEST_CASE("extractor matches conv + arithmetic mean oracle on a random 5x8 input")
{
    ParameterStore store;
    Rng rng(3);
    const ContextAggregator agg(make_config(AggregationMode::direct, 2, 8), store, rng);
    Rng noise(4);
    const Tensor x = num::normal({ 5, 8 }, 1.0, noise);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& conv = agg.extractor(l);
        const auto want = oracle::column_mean(oracle::conv1d_same(x, conv.weight, conv.bias), 5, 8);
        CHECK(max_abs_diff(agg.extract_layer_context(x, l), want) <= 1e-12);
    }
}

TEST_CASE("empty sequence is rejected by the extractor")
{
    ParameterStore store;
    Rng rng(5);
    const ContextAggregator agg(make_config(AggregationMode::direct, 1, 4), store, rng);
    CHECK_THROWS_AS((void)agg.extract_layer_context(Tensor({ 0, 4 }), 0), InputError);
}

TEST_CASE("frame order matters for width-3 extractors but not for width 1")
{
    Rng noise(6);
    const Tensor x = num::normal({ 6, 4 }, 1.0, noise);
    std::vector<Tensor> rows;
    for (const std::size_t r : { 3u, 0u, 5u, 1u, 4u, 2u }) {
        rows.push_back(ops::slice(x, 0, r, 1));
    }
    const Tensor permuted = ops::concat(rows, 0);

    ParameterStore s3;
    Rng r3(7);
    const ContextAggregator wide(make_config(AggregationMode::direct, 1, 4), s3, r3);
    CHECK(max_abs_diff(wide.extract_layer_context(x, 0),
                       oracle::to_vec(wide.extract_layer_context(permuted, 0)))
          > 1e-6);

    auto narrow_cfg = make_config(AggregationMode::direct, 1, 4);
    narrow_cfg.conv_kernel = 1;
    ParameterStore s1;
    Rng r1(7);
    const ContextAggregator narrow(narrow_cfg, s1, r1);
    CHECK(max_abs_diff(narrow.extract_layer_context(x, 0),
                       oracle::to_vec(narrow.extract_layer_context(permuted, 0)))
          <= 1e-12);
}

TEST_CASE("paper sizes: concatenation width 3584 and eight attention slots")
{
    const auto c = make_config(AggregationMode::direct, 6, 512, 8);
    CHECK(c.num_contexts() * c.model_dim == 3584);
    CHECK(c.memory_slots() == 8);
}

TEST_CASE("direct aggregation of equal contexts with an averaging projection gives LN(2g)")
{
    ParameterStore store;
    Rng rng(8);
    const std::size_t blocks = 2;
    const std::size_t d = 4;
    const ContextAggregator agg(make_config(AggregationMode::direct, blocks, d), store, rng);
    const auto& proj = agg.concat_projection();
    fill(proj.weight, 0.0);
    fill(proj.bias, 0.0);
    auto w = proj.weight.mutable_values();
    for (std::size_t l = 0; l <= blocks; ++l) {
        for (std::size_t c = 0; c < d; ++c) {
            w[(l * d + c) * d + c] = 1.0 / static_cast<double>(blocks + 1);
        }
    }
    // silence the FFN so the final stage is LN applied to an LN output
    fill(agg.ffn().outer.weight, 0.0);
    fill(agg.ffn().outer.bias, 0.0);
    const Tensor g = Tensor::matrix({ { 0.3, -1.2, 2.5, 0.1 } });
    LayerContextSet set{ { g, g, g } };
    const auto ctx = agg.direct_aggregate(set);
    REQUIRE(ctx.g);
    CHECK(ctx.mode == AggregationMode::direct);
    const Tensor unit({ 1, d }, 1.0);
    const Tensor zero({ 1, d }, 0.0);
    const auto want = oracle::layer_norm({ 0.6, -2.4, 5.0, 0.2 }, unit, zero,
                                         num::layer_norm_epsilon);
    CHECK(max_abs_diff(*ctx.g, want) <= 1e-8);
}

TEST_CASE("direct aggregation matches a hand-composed oracle")
{
    ParameterStore store;
    Rng rng(9);
    const ContextAggregator agg(make_config(AggregationMode::direct, 2, 4), store, rng);
    const auto set = random_set(3, 4, 10);
    const auto ctx = agg.direct_aggregate(set);
    oracle::Vec joined;
    for (const auto& g : set.contexts) {
        const auto v = oracle::to_vec(g);
        joined.insert(joined.end(), v.begin(), v.end());
    }
    const auto& proj = agg.concat_projection();
    const auto c = oracle::layer_norm(
        oracle::add(oracle::affine(joined, proj.weight, proj.bias), oracle::to_vec(set.contexts[2])),
        agg.aggregate_norm().gain, agg.aggregate_norm().bias, num::layer_norm_epsilon);
    CHECK(max_abs_diff(*ctx.g, ffn_stage(agg, c)) <= 1e-12);
}

TEST_CASE("weighted aggregation matches the attention-loop oracle")
{
    ParameterStore store;
    Rng rng(11);
    const ContextAggregator agg(make_config(AggregationMode::weighted, 2, 4), store, rng);
    const auto set = random_set(3, 4, 12);
    const auto ctx = agg.weighted_aggregate(set);

    oracle::Matrix memory;
    for (const auto& g : set.contexts) {
        memory.push_back(oracle::to_vec(g));
    }
    memory.push_back(memory.back());
    const auto& a = agg.layer_attention();
    const auto att = oracle::multi_head_attention({ memory.back() }, memory, a.query.weight,
                                                  a.query.bias, a.key.weight, a.key.bias,
                                                  a.value.weight, a.value.bias, a.output.weight,
                                                  a.output.bias, 2);
    const auto c = oracle::layer_norm(oracle::add(att.output[0], memory.back()),
                                      agg.aggregate_norm().gain, agg.aggregate_norm().bias,
                                      num::layer_norm_epsilon);
    CHECK(max_abs_diff(*ctx.g, ffn_stage(agg, c)) <= 1e-12);
    REQUIRE(ctx.head_weights.size() == 2);
    for (std::size_t h = 0; h < 2; ++h) {
        const Tensor last = ops::slice(ctx.head_weights[h], 0, 3, 1);
        CHECK(max_abs_diff(last, att.weights[h][0]) <= 1e-12);
    }
}

TEST_CASE("weighted aggregation weights form 8x8 distributions at L=6")
{
    ParameterStore store;
    Rng rng(13);
    const ContextAggregator agg(make_config(AggregationMode::weighted, 6, 16, 8), store, rng);
    const auto ctx = agg.weighted_aggregate(random_set(7, 16, 14));
    REQUIRE(ctx.head_weights.size() == 8);
    for (const auto& w : ctx.head_weights) {
        CHECK(w.shape() == num::Shape{ 8, 8 });
        for (std::size_t r = 0; r < 8; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < 8; ++c) {
                CHECK(w.at(r, c) >= 0.0);
                total += w.at(r, c);
            }
            CHECK(std::abs(total - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("identical memory vectors make the attention read independent of the weights")
{
    ParameterStore store;
    Rng rng(15);
    const ContextAggregator agg(make_config(AggregationMode::weighted, 3, 4), store, rng);
    const Tensor g = Tensor::matrix({ { 1.0, -0.5, 0.25, 2.0 } });
    const auto ctx = agg.weighted_aggregate({ { g, g, g, g } });
    // with every slot equal the read is the single-slot attention output
    const auto single = agg.layer_attention()(g, g).output;
    const auto c = oracle::layer_norm(oracle::add(oracle::to_vec(single), oracle::to_vec(g)),
                                      agg.aggregate_norm().gain, agg.aggregate_norm().bias,
                                      num::layer_norm_epsilon);
    CHECK(max_abs_diff(*ctx.g, ffn_stage(agg, c)) <= 1e-12);
}

TEST_CASE("aggregation is deterministic")
{
    for (const auto mode : { AggregationMode::direct, AggregationMode::weighted }) {
        ParameterStore store;
        Rng rng(16);
        const ContextAggregator agg(make_config(mode, 2, 4), store, rng);
        const auto set = random_set(3, 4, 17);
        const Tensor ga = *agg.aggregate(set).g;
        const Tensor gb = *agg.aggregate(set).g;
        const auto a = ga.values();
        const auto b = gb.values();
        CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    }
}

TEST_CASE("fusion: mode none passes the encoder output through untouched")
{
    ParameterStore store;
    Rng rng(18);
    const ContextAggregator agg(make_config(AggregationMode::none, 2, 4), store, rng);
    CHECK(store.size() == 0);
    const auto stack = random_stack(2, 5, 4, 19);
    const Tensor out = agg.apply(stack);
    CHECK(out.same_storage(stack.top()));
    CHECK(agg.fuse(stack.top(), SentenceContext{}).same_storage(stack.top()));
}

TEST_CASE("fusion with zero context and an identity encoder half is the identity")
{
    ParameterStore store;
    Rng rng(20);
    const ContextAggregator agg(make_config(AggregationMode::direct, 1, 3), store, rng);
    const auto& f = agg.fusion();
    fill(f.bias, 0.0);
    auto w = f.weight.mutable_values();
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            w[r * 3 + c] = r == c ? 1.0 : 0.0;
        }
    }
    Rng noise(21);
    const Tensor h = num::normal({ 4, 3 }, 1.0, noise);
    const SentenceContext ctx{ AggregationMode::direct, Tensor({ 1, 3 }, 0.0), {} };
    CHECK(max_abs_diff(agg.fuse(h, ctx), oracle::to_vec(h)) <= 1e-15);
}

TEST_CASE("fusion matches a concat + project oracle and checks dimensions")
{
    ParameterStore store;
    Rng rng(22);
    const ContextAggregator agg(make_config(AggregationMode::weighted, 1, 4), store, rng);
    Rng noise(23);
    const Tensor h = num::normal({ 3, 4 }, 1.0, noise);
    const Tensor g = num::normal({ 1, 4 }, 1.0, noise);
    const Tensor out = agg.fuse(h, { AggregationMode::weighted, g, {} });
    oracle::Vec want;
    for (std::size_t t = 0; t < 3; ++t) {
        auto row = oracle::to_matrix(h)[t];
        const auto gv = oracle::to_vec(g);
        row.insert(row.end(), gv.begin(), gv.end());
        const auto y = oracle::affine(row, agg.fusion().weight, agg.fusion().bias);
        want.insert(want.end(), y.begin(), y.end());
    }
    CHECK(max_abs_diff(out, want) <= 1e-12);
    CHECK_THROWS_AS((void)agg.fuse(Tensor({ 3, 5 }, 0.0), { AggregationMode::weighted, g, {} }),
                    num::ShapeError);
    CHECK_THROWS_AS((void)agg.fuse(h, { AggregationMode::weighted, std::nullopt, {} }), InputError);
}

TEST_CASE("every layer's extractor receives gradient from a loss on g")
{
    for (const auto mode : { AggregationMode::direct, AggregationMode::weighted }) {
        ParameterStore store;
        Rng rng(24);
        const ContextAggregator agg(make_config(mode, 3, 4), store, rng);
        const auto stack = random_stack(3, 5, 4, 25);
        store.zero_grad();
        {
            num::Tape tape;
            const auto ctx = agg.aggregate(agg.extract(stack));
            tape.backward(readout(*ctx.g, 26));
        }
        for (std::size_t l = 0; l <= 3; ++l) {
            double norm = 0.0;
            for (const double v : agg.extractor(l).weight.grad()) {
                norm += v * v;
            }
            INFO("mode " << to_string(mode) << " layer " << l);
            CHECK(norm > 0.0);
        }
    }
}

TEST_CASE("aggregation and fusion gradients match finite differences")
{
    for (const auto mode : { AggregationMode::direct, AggregationMode::weighted }) {
        ParameterStore store;
        Rng rng(27);
        const ContextAggregator agg(make_config(mode, 2, 4), store, rng);
        Rng noise(28);
        const Tensor stacked = num::normal({ 3, 4 }, 1.0, noise);
        const Tensor top = num::normal({ 2, 4 }, 1.0, noise);
        const auto report = num::check_gradients(
            [&](const Tensor& in) {
                return readout(agg.fuse(top, agg.aggregate(to_sets(in))), 29);
            },
            stacked, store.select("context"));
        INFO(to_string(mode) << ": " << report.summary());
        CHECK(report.passed());
    }
}

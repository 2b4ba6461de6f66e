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

#include "sentctx/attention/gmm_attention.hpp"

#include "sentctx/encoder/text.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>

namespace sentctx {

namespace ops = sentctx::num;

namespace {

auto normal_cdf(double z) -> double { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

auto normal_pdf(double z) -> double
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

auto inverse_softplus(double y) -> double { return std::log(std::expm1(y)); }

void put_u64(std::ostream& out, std::uint64_t v)
{
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

auto get_u64(std::istream& in) -> std::uint64_t
{
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw InputError("attention state: truncated record");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return v;
}

void put_doubles(std::ostream& out, std::span<const double> values)
{
    for (const double v : values) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        put_u64(out, bits);
    }
}

auto get_doubles(std::istream& in, std::size_t count) -> std::vector<double>
{
    std::vector<double> values(count);
    for (auto& v : values) {
        const std::uint64_t bits = get_u64(in);
        std::memcpy(&v, &bits, sizeof v);
    }
    return values;
}

} // namespace

void GmmAttentionConfig::validate() const
{
    if (num_mixtures < 1) {
        throw ConfigError("gmm attention: need at least one mixture");
    }
    if (!(sigma_floor > 0.0)) {
        throw ConfigError("gmm attention: sigma floor must be positive");
    }
    if (query_dim == 0 || hidden_units == 0) {
        throw ConfigError("gmm attention: query_dim and hidden_units must be positive");
    }
    if (!(initial_step > 0.0) || !(initial_sigma > sigma_floor)) {
        throw ConfigError("gmm attention: initial step/sigma out of range");
    }
}

auto init_state(const Tensor& memory, std::size_t num_mixtures) -> GmmAttentionState
{
    if (num_mixtures < 1) {
        throw ConfigError("gmm attention: need at least one mixture");
    }
    if (!memory.defined() || memory.numel() == 0 || memory.rows() == 0) {
        throw InputError("gmm attention: empty memory");
    }
    return { Tensor({ 1, num_mixtures }, 0.0), memory };
}

void write_state(std::ostream& out, const GmmAttentionState& state)
{
    put_u64(out, state.num_mixtures());
    put_doubles(out, state.means.values());
    put_u64(out, state.memory.rows());
    put_u64(out, state.memory.cols());
    put_doubles(out, state.memory.values());
}

auto read_state(std::istream& in) -> GmmAttentionState
{
    const auto k = static_cast<std::size_t>(get_u64(in));
    auto means = get_doubles(in, k);
    const auto rows = static_cast<std::size_t>(get_u64(in));
    const auto cols = static_cast<std::size_t>(get_u64(in));
    auto memory = get_doubles(in, rows * cols);
    return { Tensor({ 1, k }, std::move(means)), Tensor({ rows, cols }, std::move(memory)) };
}

auto gmm_alignment(const Tensor& mixture_weights, const Tensor& means, const Tensor& sigmas,
                   std::size_t length) -> Tensor
{
    const std::size_t k = means.numel();
    if (mixture_weights.numel() != k || sigmas.numel() != k) {
        throw num::ShapeError("gmm_alignment: mixture shapes differ "
                              + num::to_string(mixture_weights.shape()) + " "
                              + num::to_string(means.shape()) + " "
                              + num::to_string(sigmas.shape()));
    }
    const auto w = mixture_weights.values();
    const auto mu = means.values();
    const auto s = sigmas.values();
    std::vector<double> out(length, 0.0);
    for (std::size_t j = 0; j < length; ++j) {
        const double pos = static_cast<double>(j);
        for (std::size_t m = 0; m < k; ++m) {
            const double hi = (pos + 0.5 - mu[m]) / s[m];
            const double lo = (pos - 0.5 - mu[m]) / s[m];
            out[j] += w[m] * (normal_cdf(hi) - normal_cdf(lo));
        }
    }
    return ops::make_op_result(
        "gmm_alignment", { 1, length }, std::move(out), { mixture_weights, means, sigmas },
        [mixture_weights, means, sigmas, length, k](const Tensor& o) {
            const auto g = o.grad();
            const auto w2 = mixture_weights.values();
            const auto mu2 = means.values();
            const auto s2 = sigmas.values();
            std::vector<double> dw(k, 0.0);
            std::vector<double> dmu(k, 0.0);
            std::vector<double> ds(k, 0.0);
            for (std::size_t j = 0; j < length; ++j) {
                const double pos = static_cast<double>(j);
                for (std::size_t m = 0; m < k; ++m) {
                    const double hi = (pos + 0.5 - mu2[m]) / s2[m];
                    const double lo = (pos - 0.5 - mu2[m]) / s2[m];
                    const double phi_hi = normal_pdf(hi);
                    const double phi_lo = normal_pdf(lo);
                    dw[m] += g[j] * (normal_cdf(hi) - normal_cdf(lo));
                    dmu[m] += g[j] * w2[m] * (phi_lo - phi_hi) / s2[m];
                    ds[m] += g[j] * w2[m] * (phi_lo * lo - phi_hi * hi) / s2[m];
                }
            }
            const auto accumulate = [](const Tensor& t, const std::vector<double>& d) {
                if (t.requires_grad()) {
                    auto grad = t.mutable_grad();
                    for (std::size_t i = 0; i < d.size(); ++i) {
                        grad[i] += d[i];
                    }
                }
            };
            accumulate(mixture_weights, dw);
            accumulate(means, dmu);
            accumulate(sigmas, ds);
        });
}

GmmAttention::GmmAttention(GmmAttentionConfig config, ParameterStore& store, Rng& rng,
                           const std::string& prefix)
    : config_(config)
{
    config_.validate();
    const std::size_t k = config_.num_mixtures;
    hidden_ = Linear::create(store, prefix + ".mlp1", config_.query_dim, config_.hidden_units, rng);
    projection_ = Linear::create(store, prefix + ".mlp2", config_.hidden_units, 3 * k, rng);
    // start every mixture moving forward by initial_step with width initial_sigma
    auto bias = projection_.bias.mutable_values();
    for (std::size_t m = 0; m < k; ++m) {
        bias[k + m] = inverse_softplus(config_.initial_step);
        bias[2 * k + m] = inverse_softplus(config_.initial_sigma - config_.sigma_floor);
    }
    // small output weights keep the initial parameters near the biases
    for (auto& v : projection_.weight.mutable_values()) {
        v *= 0.1;
    }
}

auto GmmAttention::step(const GmmAttentionState& state, const Tensor& query) const -> GmmStepResult
{
    const std::size_t k = config_.num_mixtures;
    if (state.num_mixtures() != k) {
        throw num::ShapeError("gmm attention: state has " + std::to_string(state.num_mixtures())
                              + " mixtures, network predicts " + std::to_string(k));
    }
    if (query.numel() != config_.query_dim) {
        throw num::ShapeError("gmm attention: query " + num::to_string(query.shape())
                              + " does not match query_dim " + std::to_string(config_.query_dim));
    }
    const Tensor params = projection_(ops::tanh(hidden_(query)));
    const auto parts = ops::split(params, { k, k, k }, 1);

    GmmStepResult r;
    r.mixture_weights = ops::softmax(parts[0]);
    r.deltas = ops::softplus(parts[1]);
    r.sigmas = ops::add(ops::softplus(parts[2]), Tensor({ 1, k }, config_.sigma_floor));
    r.state.means = ops::add(state.means, r.deltas);
    r.state.memory = state.memory;
    r.weights = gmm_alignment(r.mixture_weights, r.state.means, r.sigmas, state.length());
    r.context = ops::matmul(r.weights, state.memory);
    return r;
}

} // namespace sentctx

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

#include "sentctx/numcore/parameter.hpp"

#include <cmath>
#include <stdexcept>

namespace sentctx::num {

auto ParameterStore::add(std::string name, Tensor init) -> Tensor
{
    if (index_.contains(name)) {
        throw std::invalid_argument("parameter store: duplicate name '" + name + "'");
    }
    init.set_requires_grad(true);
    (void)init.mutable_grad();
    index_.emplace(name, params_.size());
    params_.push_back({ std::move(name), init });
    return init;
}

auto ParameterStore::find(const std::string& name) const -> const Parameter*
{
    const auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
}

auto ParameterStore::scalar_count() const -> std::size_t { return scalar_count(""); }

auto ParameterStore::scalar_count(std::string_view prefix) const -> std::size_t
{
    std::size_t total = 0;
    for (const auto& p : params_) {
        if (p.name.starts_with(prefix)) {
            total += p.tensor.numel();
        }
    }
    return total;
}

auto ParameterStore::select(std::string_view prefix) const -> std::vector<Parameter>
{
    std::vector<Parameter> out;
    for (const auto& p : params_) {
        if (p.name.starts_with(prefix)) {
            out.push_back(p);
        }
    }
    return out;
}

void ParameterStore::zero_grad()
{
    for (auto& p : params_) {
        p.tensor.zero_grad();
    }
}

auto ParameterStore::grad_norm() const -> double
{
    double total = 0.0;
    for (const auto& p : params_) {
        for (const double g : p.tensor.grad()) {
            total += g * g;
        }
    }
    return std::sqrt(total);
}

auto xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) -> Tensor
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(std::move(shape), -limit, limit, rng);
}

auto normal(Shape shape, double stddev, Rng& rng) -> Tensor
{
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) {
        v = dist(rng);
    }
    return Tensor(std::move(shape), std::move(values));
}

auto uniform(Shape shape, double low, double high, Rng& rng) -> Tensor
{
    std::uniform_real_distribution<double> dist(low, high);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) {
        v = dist(rng);
    }
    return Tensor(std::move(shape), std::move(values));
}

auto derive_seed(std::uint64_t seed, std::string_view stream) -> std::uint64_t
{
    // FNV-1a over the label, mixed with the seed by splitmix64.
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL + h;
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

} // namespace sentctx::num

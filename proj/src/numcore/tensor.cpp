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

#include "sentctx/numcore/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sentctx::num {

namespace {

thread_local Tape* active_tape = nullptr;
std::atomic<std::uint64_t> next_tape_id { 1 };

} // namespace

auto to_string(const Shape& shape) -> std::string
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out << 'x';
        }
        out << shape[i];
    }
    out << ']';
    return out.str();
}

auto shape_numel(const Shape& shape) -> std::size_t
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t { 1 },
                           std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : storage_(std::make_shared<TensorStorage>())
{
    storage_->value.assign(shape_numel(shape), fill);
    storage_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : storage_(std::make_shared<TensorStorage>())
{
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + to_string(shape) + " holds "
                         + std::to_string(shape_numel(shape)) + " values, got "
                         + std::to_string(values.size()));
    }
    storage_->shape = std::move(shape);
    storage_->value = std::move(values);
}

auto Tensor::scalar(double value) -> Tensor
{
    return Tensor(Shape {}, std::vector<double> { value });
}

auto Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) -> Tensor
{
    const std::size_t n = rows.size();
    const std::size_t m = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(n * m);
    for (const auto& r : rows) {
        if (r.size() != m) {
            throw ShapeError("tensor: ragged matrix literal");
        }
        values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor({ n, m }, std::move(values));
}

auto Tensor::row(std::span<const double> values) -> Tensor
{
    return Tensor({ 1, values.size() }, std::vector<double>(values.begin(), values.end()));
}

auto Tensor::checked() const -> TensorStorage&
{
    if (!storage_) {
        throw TapeError("tensor: use of undefined tensor");
    }
    return *storage_;
}

auto Tensor::shape() const -> const Shape& { return checked().shape; }

auto Tensor::numel() const -> std::size_t { return checked().value.size(); }

auto Tensor::dim(std::size_t axis) const -> std::size_t
{
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for "
                         + to_string(s));
    }
    return s[axis];
}

auto Tensor::rows() const -> std::size_t
{
    const auto& s = shape();
    if (s.size() == 2) {
        return s[0];
    }
    if (s.size() <= 1) {
        return 1;
    }
    throw ShapeError("tensor: rows() needs rank <= 2, got " + to_string(s));
}

auto Tensor::cols() const -> std::size_t
{
    const auto& s = shape();
    if (s.empty()) {
        return 1;
    }
    if (s.size() <= 2) {
        return s.back();
    }
    throw ShapeError("tensor: cols() needs rank <= 2, got " + to_string(s));
}

auto Tensor::values() const -> std::span<const double> { return checked().value; }

auto Tensor::mutable_values() const -> std::span<double> { return checked().value; }

auto Tensor::item() const -> double
{
    if (numel() != 1) {
        throw ShapeError("tensor: item() on " + to_string(shape()));
    }
    return values()[0];
}

auto Tensor::at(std::size_t r, std::size_t c) const -> double
{
    return values()[r * cols() + c];
}

auto Tensor::requires_grad() const -> bool { return checked().requires_grad; }

void Tensor::set_requires_grad(bool flag) { checked().requires_grad = flag; }

auto Tensor::has_grad() const -> bool { return !checked().grad.empty(); }

auto Tensor::grad() const -> std::span<const double> { return checked().grad; }

auto Tensor::mutable_grad() const -> std::span<double>
{
    auto& s = checked();
    if (s.grad.empty()) {
        s.grad.assign(s.value.size(), 0.0);
    }
    return s.grad;
}

void Tensor::zero_grad()
{
    auto& s = checked();
    std::fill(s.grad.begin(), s.grad.end(), 0.0);
}

auto Tensor::detach() const -> Tensor
{
    return Tensor(shape(), checked().value);
}

Tape::Tape()
    : id_(next_tape_id.fetch_add(1))
    , previous_(active_tape)
{
    active_tape = this;
}

Tape::~Tape() { active_tape = previous_; }

auto Tape::active() -> Tape* { return active_tape; }

void Tape::backward(const Tensor& loss)
{
    if (consumed_) {
        throw TapeError("backward: tape already consumed");
    }
    if (!loss.defined() || loss.numel() != 1) {
        throw TapeError("backward: loss must be a scalar, got "
                        + (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
    }
    if (loss.storage()->tape_id != id_) {
        throw TapeError("backward: loss was not recorded on this tape");
    }
    consumed_ = true;
    loss.mutable_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        // Outputs that never received gradient do not contribute.
        if (it->output.has_grad()) {
            it->backward(it->output);
        }
    }
    entries_.clear();
}

auto make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                    const std::vector<Tensor>& inputs,
                    std::function<void(const Tensor&)> backward) -> Tensor
{
    const auto bad = std::find_if(values.begin(), values.end(),
                                  [](double v) { return !std::isfinite(v); });
    if (bad != values.end()) {
        throw NumericError(std::string(op) + ": non-finite output at index "
                           + std::to_string(bad - values.begin()) + " of "
                           + to_string(shape));
    }
    Tensor out(std::move(shape), std::move(values));
    Tape* tape = Tape::active();
    if (tape == nullptr || tape->consumed()) {
        return out;
    }
    const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                        [](const Tensor& t) { return t.requires_grad(); });
    if (needs_grad) {
        out.storage_->requires_grad = true;
        out.storage_->tape_id = tape->id_;
        tape->entries_.push_back({ out, std::move(backward) });
    }
    return out;
}

auto make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                    std::initializer_list<Tensor> inputs,
                    std::function<void(const Tensor&)> backward) -> Tensor
{
    return make_op_result(op, std::move(shape), std::move(values),
                          std::vector<Tensor>(inputs), std::move(backward));
}

} // namespace sentctx::num

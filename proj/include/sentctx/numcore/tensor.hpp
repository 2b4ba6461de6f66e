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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sentctx::num {

using Shape = std::vector<std::size_t>;

auto to_string(const Shape& shape) -> std::string;
auto shape_numel(const Shape& shape) -> std::size_t;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct TensorStorage {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t tape_id = 0; // 0 for leaves
};

/// Dense row-major double tensor. Copies share storage; use clone() or
/// detach() for an independent copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static auto scalar(double value) -> Tensor;
    /// Row-major matrix from nested rows; every row must have the same width.
    static auto matrix(std::initializer_list<std::initializer_list<double>> rows) -> Tensor;
    static auto row(std::span<const double> values) -> Tensor;

    [[nodiscard]] auto defined() const -> bool { return storage_ != nullptr; }
    [[nodiscard]] auto shape() const -> const Shape&;
    [[nodiscard]] auto rank() const -> std::size_t { return shape().size(); }
    [[nodiscard]] auto numel() const -> std::size_t;
    [[nodiscard]] auto dim(std::size_t axis) const -> std::size_t;
    // Rank-2 views; rank-1 tensors read as a single row.
    [[nodiscard]] auto rows() const -> std::size_t;
    [[nodiscard]] auto cols() const -> std::size_t;

    [[nodiscard]] auto values() const -> std::span<const double>;
    // Writes through the shared storage, so every handle sees the change.
    [[nodiscard]] auto mutable_values() const -> std::span<double>;
    [[nodiscard]] auto item() const -> double;
    [[nodiscard]] auto at(std::size_t i) const -> double { return values()[i]; }
    [[nodiscard]] auto at(std::size_t r, std::size_t c) const -> double;

    [[nodiscard]] auto requires_grad() const -> bool;
    void set_requires_grad(bool flag);
    [[nodiscard]] auto has_grad() const -> bool;
    /// Empty span when no gradient has been accumulated yet.
    [[nodiscard]] auto grad() const -> std::span<const double>;
    /// Allocates a zero gradient on first use. Const because Tensor is a
    /// handle; op backward passes accumulate through captured copies.
    [[nodiscard]] auto mutable_grad() const -> std::span<double>;
    void zero_grad();

    [[nodiscard]] auto detach() const -> Tensor;
    [[nodiscard]] auto clone() const -> Tensor { return detach(); }

    [[nodiscard]] auto storage() const -> const TensorStorage* { return storage_.get(); }
    [[nodiscard]] auto same_storage(const Tensor& other) const -> bool
    {
        return storage_ == other.storage_;
    }

private:
    friend class Tape;
    friend auto make_op_result(std::string_view, Shape, std::vector<double>,
                               const std::vector<Tensor>&,
                               std::function<void(const Tensor&)>) -> Tensor;

    auto checked() const -> TensorStorage&;

    std::shared_ptr<TensorStorage> storage_;
};

/// Records differentiable operations executed on this thread while alive.
/// Tapes nest; the innermost live tape records. A tape runs backward once.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    auto operator=(const Tape&) -> Tape& = delete;
    Tape(Tape&&) = delete;
    auto operator=(Tape&&) -> Tape& = delete;

    /// Accumulates d(loss)/d(x) into every reachable tensor requiring grad.
    void backward(const Tensor& loss);

    [[nodiscard]] auto size() const -> std::size_t { return entries_.size(); }
    [[nodiscard]] auto consumed() const -> bool { return consumed_; }
    [[nodiscard]] auto id() const -> std::uint64_t { return id_; }

    static auto active() -> Tape*;

private:
    friend auto make_op_result(std::string_view, Shape, std::vector<double>,
                               const std::vector<Tensor>&,
                               std::function<void(const Tensor&)>) -> Tensor;

    struct Entry {
        Tensor output;
        std::function<void(const Tensor&)> backward;
    };

    std::uint64_t id_;
    Tape* previous_;
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

/// Builds an op output. The result is finite-checked; when a tape is active
/// and any input requires grad, `backward` is recorded and later called with
/// the output tensor (its grad() holds dL/d(output)).
auto make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                    std::initializer_list<Tensor> inputs,
                    std::function<void(const Tensor&)> backward) -> Tensor;

auto make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                    const std::vector<Tensor>& inputs,
                    std::function<void(const Tensor&)> backward) -> Tensor;

} // namespace sentctx::num

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

#include "sentctx/numcore/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace sentctx::num {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

auto as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) -> ConstMap
{
    return { data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols) };
}

auto as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) -> MutMap
{
    return { data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols) };
}

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail)
{
    throw ShapeError(std::string(op) + ": " + detail);
}

void require_matrix(std::string_view op, const Tensor& t)
{
    if (!t.defined()) {
        shape_fail(op, "undefined operand");
    }
    if (t.rank() > 2) {
        shape_fail(op, "expected rank <= 2, got " + to_string(t.shape()));
    }
}

enum class Broadcast { none, row };

auto elementwise_mode(std::string_view op, const Tensor& a, const Tensor& b) -> Broadcast
{
    require_matrix(op, a);
    require_matrix(op, b);
    if (a.shape() == b.shape()) {
        return Broadcast::none;
    }
    if (b.rows() == 1 && b.cols() == a.cols() && a.rank() == 2) {
        return Broadcast::row;
    }
    if (a.numel() == b.numel() && a.rows() == b.rows() && a.cols() == b.cols()) {
        return Broadcast::none;
    }
    shape_fail(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename Forward, typename GradA, typename GradB>
auto binary_elementwise(std::string_view op, const Tensor& a, const Tensor& b, Forward f,
                        GradA ga, GradB gb) -> Tensor
{
    const Broadcast mode = elementwise_mode(op, a, b);
    const std::size_t n = a.numel();
    const std::size_t m = a.cols();
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(av[i], bv[mode == Broadcast::row ? i % m : i]);
    }
    return make_op_result(op, a.shape(), std::move(out), { a, b },
                          [a, b, mode, m, ga, gb](const Tensor& o) {
                              const auto g = o.grad();
                              const auto av2 = a.values();
                              const auto bv2 = b.values();
                              if (a.requires_grad()) {
                                  auto da = a.mutable_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      const double bi = bv2[mode == Broadcast::row ? i % m : i];
                                      da[i] += g[i] * ga(av2[i], bi);
                                  }
                              }
                              if (b.requires_grad()) {
                                  auto db = b.mutable_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      const std::size_t j = mode == Broadcast::row ? i % m : i;
                                      db[j] += g[i] * gb(av2[i], bv2[j]);
                                  }
                              }
                          });
}

template <typename Forward, typename Derivative>
auto unary_elementwise(std::string_view op, const Tensor& x, Forward f, Derivative df) -> Tensor
{
    if (!x.defined()) {
        shape_fail(op, "undefined operand");
    }
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    std::transform(xv.begin(), xv.end(), out.begin(), f);
    // df receives (input, output).
    return make_op_result(op, x.shape(), std::move(out), { x }, [x, df](const Tensor& o) {
        if (!x.requires_grad()) {
            return;
        }
        const auto g = o.grad();
        const auto xv2 = x.values();
        const auto ov = o.values();
        auto dx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            dx[i] += g[i] * df(xv2[i], ov[i]);
        }
    });
}

auto ids_from_tensor(const Tensor& ids) -> std::vector<std::size_t>
{
    std::vector<std::size_t> out;
    out.reserve(ids.numel());
    for (const double v : ids.values()) {
        if (v < 0.0 || std::floor(v) != v) {
            shape_fail("embed_lookup", "ids must be non-negative integers");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

} // namespace

auto matmul(const Tensor& a, const Tensor& b, bool transpose_b) -> Tensor
{
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const std::size_t n = a.rows();
    const std::size_t k = a.cols();
    const std::size_t kb = transpose_b ? b.cols() : b.rows();
    const std::size_t m = transpose_b ? b.rows() : b.cols();
    if (k != kb) {
        shape_fail("matmul", "shape mismatch " + to_string(a.shape())
                                 + (transpose_b ? " * T" : " * ") + to_string(b.shape()));
    }
    std::vector<double> out(n * m);
    auto c = as_matrix(std::span<double>(out), n, m);
    const auto am = as_matrix(a.values(), n, k);
    const auto bm = as_matrix(b.values(), b.rows(), b.cols());
    if (transpose_b) {
        c.noalias() = am * bm.transpose();
    } else {
        c.noalias() = am * bm;
    }
    return make_op_result("matmul", { n, m }, std::move(out), { a, b },
                          [a, b, n, k, m, transpose_b](const Tensor& o) {
                              const auto g = as_matrix(o.grad(), n, m);
                              const auto am2 = as_matrix(a.values(), n, k);
                              const auto bm2 = as_matrix(b.values(), b.rows(), b.cols());
                              if (a.requires_grad()) {
                                  auto da = as_matrix(a.mutable_grad(), n, k);
                                  if (transpose_b) {
                                      da.noalias() += g * bm2;
                                  } else {
                                      da.noalias() += g * bm2.transpose();
                                  }
                              }
                              if (b.requires_grad()) {
                                  auto db = as_matrix(b.mutable_grad(), b.rows(), b.cols());
                                  if (transpose_b) {
                                      db.noalias() += g.transpose() * am2;
                                  } else {
                                      db.noalias() += am2.transpose() * g;
                                  }
                              }
                          });
}

auto add(const Tensor& a, const Tensor& b) -> Tensor
{
    return binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

auto sub(const Tensor& a, const Tensor& b) -> Tensor
{
    return binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

auto mul(const Tensor& a, const Tensor& b) -> Tensor
{
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

auto scale(const Tensor& a, double factor) -> Tensor
{
    return unary_elementwise(
        "scale", a, [factor](double x) { return x * factor; },
        [factor](double, double) { return factor; });
}

auto concat(const std::vector<Tensor>& parts, std::size_t axis) -> Tensor
{
    if (parts.empty()) {
        shape_fail("concat", "no operands");
    }
    if (axis > 1) {
        shape_fail("concat", "axis must be 0 or 1");
    }
    for (const auto& p : parts) {
        require_matrix("concat", p);
    }
    const std::size_t fixed = axis == 0 ? parts.front().cols() : parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        const std::size_t f = axis == 0 ? p.cols() : p.rows();
        if (f != fixed) {
            shape_fail("concat", "axis " + std::to_string(axis) + " mismatch "
                                     + to_string(parts.front().shape()) + " vs "
                                     + to_string(p.shape()));
        }
        total += axis == 0 ? p.rows() : p.cols();
    }
    const std::size_t rows = axis == 0 ? total : fixed;
    const std::size_t cols = axis == 0 ? fixed : total;
    std::vector<double> out(rows * cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const auto pv = p.values();
        if (axis == 0) {
            std::copy(pv.begin(), pv.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
            offset += p.rows();
        } else {
            const std::size_t pc = p.cols();
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                            out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
            }
            offset += pc;
        }
    }
    return make_op_result("concat", { rows, cols }, std::move(out), parts,
                          [parts, axis, cols](const Tensor& o) {
                              const auto g = o.grad();
                              std::size_t off = 0;
                              for (const auto& p : parts) {
                                  const std::size_t pr = p.rows();
                                  const std::size_t pc = p.cols();
                                  if (p.requires_grad()) {
                                      auto dp = p.mutable_grad();
                                      for (std::size_t r = 0; r < pr; ++r) {
                                          for (std::size_t c = 0; c < pc; ++c) {
                                              const std::size_t src = axis == 0
                                                  ? (off + r) * cols + c
                                                  : r * cols + off + c;
                                              dp[r * pc + c] += g[src];
                                          }
                                      }
                                  }
                                  off += axis == 0 ? pr : pc;
                              }
                          });
}

auto slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t count) -> Tensor
{
    require_matrix("slice", x);
    if (axis > 1) {
        shape_fail("slice", "axis must be 0 or 1");
    }
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    const std::size_t extent = axis == 0 ? rows : cols;
    if (begin + count > extent) {
        shape_fail("slice", "range [" + std::to_string(begin) + ", "
                                + std::to_string(begin + count) + ") exceeds axis "
                                + std::to_string(axis) + " of " + to_string(x.shape()));
    }
    const std::size_t out_rows = axis == 0 ? count : rows;
    const std::size_t out_cols = axis == 0 ? cols : count;
    const std::size_t r0 = axis == 0 ? begin : 0;
    const std::size_t c0 = axis == 0 ? 0 : begin;
    const auto xv = x.values();
    std::vector<double> out(out_rows * out_cols);
    for (std::size_t r = 0; r < out_rows; ++r) {
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols + c0), out_cols,
                    out.begin() + static_cast<std::ptrdiff_t>(r * out_cols));
    }
    return make_op_result("slice", { out_rows, out_cols }, std::move(out), { x },
                          [x, r0, c0, out_rows, out_cols, cols](const Tensor& o) {
                              if (!x.requires_grad()) {
                                  return;
                              }
                              const auto g = o.grad();
                              auto dx = x.mutable_grad();
                              for (std::size_t r = 0; r < out_rows; ++r) {
                                  for (std::size_t c = 0; c < out_cols; ++c) {
                                      dx[(r0 + r) * cols + c0 + c] += g[r * out_cols + c];
                                  }
                              }
                          });
}

auto split(const Tensor& x, const std::vector<std::size_t>& sizes, std::size_t axis)
    -> std::vector<Tensor>
{
    require_matrix("split", x);
    const std::size_t extent = axis == 0 ? x.rows() : x.cols();
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t { 0 }) != extent) {
        shape_fail("split", "sizes do not cover axis " + std::to_string(axis) + " of "
                                + to_string(x.shape()));
    }
    std::vector<Tensor> out;
    out.reserve(sizes.size());
    std::size_t begin = 0;
    for (const std::size_t s : sizes) {
        out.push_back(slice(x, axis, begin, s));
        begin += s;
    }
    return out;
}

auto reshape(const Tensor& x, Shape shape) -> Tensor
{
    if (shape_numel(shape) != x.numel()) {
        shape_fail("reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    const auto xv = x.values();
    return make_op_result("reshape", std::move(shape), std::vector<double>(xv.begin(), xv.end()),
                          { x }, [x](const Tensor& o) {
                              if (!x.requires_grad()) {
                                  return;
                              }
                              const auto g = o.grad();
                              auto dx = x.mutable_grad();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  dx[i] += g[i];
                              }
                          });
}

auto transpose(const Tensor& x) -> Tensor
{
    require_matrix("transpose", x);
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    std::vector<double> out(rows * cols);
    as_matrix(std::span<double>(out), cols, rows) = as_matrix(x.values(), rows, cols).transpose();
    return make_op_result("transpose", { cols, rows }, std::move(out), { x },
                          [x, rows, cols](const Tensor& o) {
                              if (!x.requires_grad()) {
                                  return;
                              }
                              as_matrix(x.mutable_grad(), rows, cols)
                                  += as_matrix(o.grad(), cols, rows).transpose();
                          });
}

auto conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) -> Tensor
{
    require_matrix("conv1d", x);
    if (!weight.defined() || weight.rank() != 3) {
        shape_fail("conv1d", "weight must be [K x Cin x Cout], got "
                                 + (weight.defined() ? to_string(weight.shape()) : "undefined"));
    }
    const std::size_t taps = weight.dim(0);
    const std::size_t cin = weight.dim(1);
    const std::size_t cout = weight.dim(2);
    if (taps % 2 == 0) {
        shape_fail("conv1d", "kernel width must be odd, got " + std::to_string(taps));
    }
    if (x.cols() != cin) {
        shape_fail("conv1d", "input " + to_string(x.shape()) + " does not match weight "
                                 + to_string(weight.shape()));
    }
    if (bias.defined() && (bias.numel() != cout)) {
        shape_fail("conv1d", "bias " + to_string(bias.shape()) + " does not match "
                                 + std::to_string(cout) + " output channels");
    }
    const auto length = static_cast<std::ptrdiff_t>(x.rows());
    const auto pad = static_cast<std::ptrdiff_t>(taps / 2);
    std::vector<double> out(x.rows() * cout, 0.0);
    auto y = as_matrix(std::span<double>(out), x.rows(), cout);
    const auto xm = as_matrix(x.values(), x.rows(), cin);
    const auto wv = weight.values();
    // Output row t reads input row t + k - pad for tap k.
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(taps); ++k) {
        const std::ptrdiff_t shift = k - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(length, length - shift);
        if (t1 <= t0) {
            continue;
        }
        const auto wk = as_matrix(wv.subspan(static_cast<std::size_t>(k) * cin * cout, cin * cout),
                                  cin, cout);
        y.middleRows(t0, t1 - t0).noalias() += xm.middleRows(t0 + shift, t1 - t0) * wk;
    }
    if (bias.defined()) {
        const auto bv = Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(),
                                                             static_cast<Eigen::Index>(cout));
        y.rowwise() += bv;
    }
    return make_op_result(
        "conv1d", { x.rows(), cout }, std::move(out), { x, weight, bias.defined() ? bias : x },
        [x, weight, bias, taps, cin, cout, length, pad](const Tensor& o) {
            const auto g = as_matrix(o.grad(), static_cast<std::size_t>(length), cout);
            const auto xm2 = as_matrix(x.values(), static_cast<std::size_t>(length), cin);
            const auto wv2 = weight.values();
            for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(taps); ++k) {
                const std::ptrdiff_t shift = k - pad;
                const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
                const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(length, length - shift);
                if (t1 <= t0) {
                    continue;
                }
                const std::size_t off = static_cast<std::size_t>(k) * cin * cout;
                if (x.requires_grad()) {
                    auto dx = as_matrix(x.mutable_grad(), static_cast<std::size_t>(length), cin);
                    const auto wk = as_matrix(wv2.subspan(off, cin * cout), cin, cout);
                    dx.middleRows(t0 + shift, t1 - t0).noalias()
                        += g.middleRows(t0, t1 - t0) * wk.transpose();
                }
                if (weight.requires_grad()) {
                    auto dw = as_matrix(weight.mutable_grad().subspan(off, cin * cout), cin, cout);
                    dw.noalias() += xm2.middleRows(t0 + shift, t1 - t0).transpose()
                        * g.middleRows(t0, t1 - t0);
                }
            }
            if (bias.defined() && bias.requires_grad()) {
                auto db = bias.mutable_grad();
                for (std::ptrdiff_t t = 0; t < length; ++t) {
                    for (std::size_t c = 0; c < cout; ++c) {
                        db[c] += g(t, static_cast<Eigen::Index>(c));
                    }
                }
            }
        });
}

auto mean_pool(const Tensor& x) -> Tensor
{
    require_matrix("mean_pool", x);
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    if (rows == 0) {
        shape_fail("mean_pool", "empty sequence");
    }
    const auto xv = x.values();
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[c] += xv[r * cols + c];
        }
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (auto& v : out) {
        v *= inv;
    }
    return make_op_result("mean_pool", { 1, cols }, std::move(out), { x },
                          [x, rows, cols, inv](const Tensor& o) {
                              if (!x.requires_grad()) {
                                  return;
                              }
                              const auto g = o.grad();
                              auto dx = x.mutable_grad();
                              for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t c = 0; c < cols; ++c) {
                                      dx[r * cols + c] += g[c] * inv;
                                  }
                              }
                          });
}

auto softmax(const Tensor& x) -> Tensor
{
    require_matrix("softmax", x);
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = xv.subspan(r * cols, cols);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] = std::exp(row[c] - peak);
            total += out[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] /= total;
        }
    }
    return make_op_result("softmax", x.shape(), std::move(out), { x },
                          [x, rows, cols](const Tensor& o) {
                              if (!x.requires_grad()) {
                                  return;
                              }
                              const auto g = o.grad();
                              const auto y = o.values();
                              auto dx = x.mutable_grad();
                              for (std::size_t r = 0; r < rows; ++r) {
                                  double dot = 0.0;
                                  for (std::size_t c = 0; c < cols; ++c) {
                                      dot += g[r * cols + c] * y[r * cols + c];
                                  }
                                  for (std::size_t c = 0; c < cols; ++c) {
                                      const std::size_t i = r * cols + c;
                                      dx[i] += y[i] * (g[i] - dot);
                                  }
                              }
                          });
}

auto layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) -> Tensor
{
    require_matrix("layer_norm", x);
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    for (const Tensor* p : { &gain, &bias }) {
        if (p->defined() && p->numel() != cols) {
            shape_fail("layer_norm", "affine " + to_string(p->shape()) + " does not match "
                                         + to_string(x.shape()));
        }
    }
    const auto xv = x.values();
    // normalized values and per-row inverse std, reused by backward
    auto normalized = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = xv.subspan(r * cols, cols);
        const double mu = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(cols);
        double var = 0.0;
        for (const double v : row) {
            var += (v - mu) * (v - mu);
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t c = 0; c < cols; ++c) {
            const double n = (row[c] - mu) * inv;
            (*normalized)[r * cols + c] = n;
            const double gv = gain.defined() ? gain.values()[c] : 1.0;
            const double bv = bias.defined() ? bias.values()[c] : 0.0;
            out[r * cols + c] = n * gv + bv;
        }
    }
    std::vector<Tensor> inputs { x };
    if (gain.defined()) {
        inputs.push_back(gain);
    }
    if (bias.defined()) {
        inputs.push_back(bias);
    }
    return make_op_result(
        "layer_norm", x.shape(), std::move(out), inputs,
        [x, gain, bias, normalized, inv_std, rows, cols](const Tensor& o) {
            const auto g = o.grad();
            const auto& n = *normalized;
            if (gain.defined() && gain.requires_grad()) {
                auto dg = gain.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    dg[i % cols] += g[i] * n[i];
                }
            }
            if (bias.defined() && bias.requires_grad()) {
                auto db = bias.mutable_grad();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    db[i % cols] += g[i];
                }
            }
            if (!x.requires_grad()) {
                return;
            }
            auto dx = x.mutable_grad();
            std::vector<double> dn(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                double mean_dn = 0.0;
                double mean_dn_n = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t i = r * cols + c;
                    dn[c] = g[i] * (gain.defined() ? gain.values()[c] : 1.0);
                    mean_dn += dn[c];
                    mean_dn_n += dn[c] * n[i];
                }
                mean_dn /= static_cast<double>(cols);
                mean_dn_n /= static_cast<double>(cols);
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t i = r * cols + c;
                    dx[i] += (*inv_std)[r] * (dn[c] - mean_dn - n[i] * mean_dn_n);
                }
            }
        });
}

auto relu(const Tensor& x) -> Tensor
{
    return unary_elementwise(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

auto tanh(const Tensor& x) -> Tensor
{
    return unary_elementwise(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

auto sigmoid(const Tensor& x) -> Tensor
{
    return unary_elementwise(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) {
                return 1.0 / (1.0 + std::exp(-v));
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

auto softplus(const Tensor& x) -> Tensor
{
    return unary_elementwise(
        "softplus", x,
        [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) {
            if (v >= 0.0) {
                return 1.0 / (1.0 + std::exp(-v));
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        });
}

auto embed_lookup(const Tensor& table, std::span<const std::vector<std::size_t>> bags) -> Tensor
{
    require_matrix("embed_lookup", table);
    const std::size_t vocab = table.rows();
    const std::size_t width = table.cols();
    const auto tv = table.values();
    std::vector<double> out(bags.size() * width, 0.0);
    for (std::size_t r = 0; r < bags.size(); ++r) {
        for (const std::size_t id : bags[r]) {
            if (id >= vocab) {
                shape_fail("embed_lookup", "id " + std::to_string(id) + " at position "
                                               + std::to_string(r) + " outside vocabulary of "
                                               + std::to_string(vocab));
            }
            for (std::size_t c = 0; c < width; ++c) {
                out[r * width + c] += tv[id * width + c];
            }
        }
    }
    std::vector<std::vector<std::size_t>> kept(bags.begin(), bags.end());
    return make_op_result("embed_lookup", { bags.size(), width }, std::move(out), { table },
                          [table, kept = std::move(kept), width](const Tensor& o) {
                              if (!table.requires_grad()) {
                                  return;
                              }
                              const auto g = o.grad();
                              auto dt = table.mutable_grad();
                              for (std::size_t r = 0; r < kept.size(); ++r) {
                                  for (const std::size_t id : kept[r]) {
                                      for (std::size_t c = 0; c < width; ++c) {
                                          dt[id * width + c] += g[r * width + c];
                                      }
                                  }
                              }
                          });
}

auto embed_lookup(const Tensor& table, std::span<const std::size_t> ids) -> Tensor
{
    std::vector<std::vector<std::size_t>> bags;
    bags.reserve(ids.size());
    for (const std::size_t id : ids) {
        bags.push_back({ id });
    }
    return embed_lookup(table, std::span<const std::vector<std::size_t>>(bags));
}

auto dropout(const Tensor& x, double rate, Rng& rng, bool enabled) -> Tensor
{
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate must be in [0, 1)");
    }
    if (!enabled || rate == 0.0) {
        return x;
    }
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> mask(x.numel());
    for (auto& m : mask) {
        m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
    }
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

auto sum(const Tensor& x) -> Tensor
{
    const auto xv = x.values();
    const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
    return make_op_result("sum", {}, { total }, { x }, [x](const Tensor& o) {
        if (!x.requires_grad()) {
            return;
        }
        const double g = o.grad()[0];
        for (auto& d : x.mutable_grad()) {
            d += g;
        }
    });
}

auto mean(const Tensor& x) -> Tensor
{
    if (x.numel() == 0) {
        shape_fail("mean", "empty operand");
    }
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

auto mse_loss(const Tensor& prediction, const Tensor& target) -> Tensor
{
    if (prediction.numel() != target.numel() || prediction.numel() == 0) {
        shape_fail("mse_loss", "shape mismatch " + to_string(prediction.shape()) + " vs "
                                   + to_string(target.shape()));
    }
    const auto pv = prediction.values();
    const auto tv = target.values();
    const double n = static_cast<double>(pv.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        total += (pv[i] - tv[i]) * (pv[i] - tv[i]);
    }
    return make_op_result("mse_loss", {}, { total / n }, { prediction, target },
                          [prediction, target, n](const Tensor& o) {
                              const double g = o.grad()[0];
                              const auto pv2 = prediction.values();
                              const auto tv2 = target.values();
                              if (prediction.requires_grad()) {
                                  auto dp = prediction.mutable_grad();
                                  for (std::size_t i = 0; i < pv2.size(); ++i) {
                                      dp[i] += g * 2.0 * (pv2[i] - tv2[i]) / n;
                                  }
                              }
                              if (target.requires_grad()) {
                                  auto dt = target.mutable_grad();
                                  for (std::size_t i = 0; i < pv2.size(); ++i) {
                                      dt[i] -= g * 2.0 * (pv2[i] - tv2[i]) / n;
                                  }
                              }
                          });
}

auto bce_with_logits(const Tensor& logits, const Tensor& targets) -> Tensor
{
    if (logits.numel() != targets.numel() || logits.numel() == 0) {
        shape_fail("bce_with_logits", "shape mismatch " + to_string(logits.shape()) + " vs "
                                          + to_string(targets.shape()));
    }
    const auto lv = logits.values();
    const auto tv = targets.values();
    const double n = static_cast<double>(lv.size());
    double total = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        const double x = lv[i];
        total += std::max(x, 0.0) - x * tv[i] + std::log1p(std::exp(-std::abs(x)));
    }
    return make_op_result("bce_with_logits", {}, { total / n }, { logits, targets },
                          [logits, targets, n](const Tensor& o) {
                              if (!logits.requires_grad()) {
                                  return;
                              }
                              const double g = o.grad()[0];
                              const auto lv2 = logits.values();
                              const auto tv2 = targets.values();
                              auto dl = logits.mutable_grad();
                              for (std::size_t i = 0; i < lv2.size(); ++i) {
                                  const double s = 1.0 / (1.0 + std::exp(-lv2[i]));
                                  dl[i] += g * (s - tv2[i]) / n;
                              }
                          });
}

auto to_string(OpKind kind) -> std::string_view
{
    switch (kind) {
    case OpKind::matmul:
        return "matmul";
    case OpKind::add:
        return "add";
    case OpKind::concat:
        return "concat";
    case OpKind::conv1d:
        return "conv1d";
    case OpKind::mean_pool:
        return "mean_pool";
    case OpKind::softmax:
        return "softmax";
    case OpKind::layer_norm:
        return "layer_norm";
    case OpKind::relu:
        return "relu";
    case OpKind::tanh:
        return "tanh";
    case OpKind::sigmoid:
        return "sigmoid";
    case OpKind::embed_lookup:
        return "embed_lookup";
    }
    return "unknown";
}

auto all_op_kinds() -> std::span<const OpKind>
{
    static constexpr std::array kinds {
        OpKind::matmul,  OpKind::add,     OpKind::concat,  OpKind::conv1d,
        OpKind::mean_pool, OpKind::softmax, OpKind::layer_norm, OpKind::relu,
        OpKind::tanh,    OpKind::sigmoid, OpKind::embed_lookup,
    };
    return kinds;
}

auto primitive_forward(OpKind kind, const std::vector<Tensor>& inputs) -> Tensor
{
    const auto arity = [&](std::size_t n) {
        if (inputs.size() != n) {
            shape_fail(to_string(kind), "expected " + std::to_string(n) + " operands, got "
                                            + std::to_string(inputs.size()));
        }
    };
    switch (kind) {
    case OpKind::matmul:
        arity(2);
        return matmul(inputs[0], inputs[1]);
    case OpKind::add:
        arity(2);
        return add(inputs[0], inputs[1]);
    case OpKind::concat:
        return concat(inputs, 1);
    case OpKind::conv1d:
        arity(3);
        return conv1d(inputs[0], inputs[1], inputs[2]);
    case OpKind::mean_pool:
        arity(1);
        return mean_pool(inputs[0]);
    case OpKind::softmax:
        arity(1);
        return softmax(inputs[0]);
    case OpKind::layer_norm:
        arity(3);
        return layer_norm(inputs[0], inputs[1], inputs[2]);
    case OpKind::relu:
        arity(1);
        return relu(inputs[0]);
    case OpKind::tanh:
        arity(1);
        return tanh(inputs[0]);
    case OpKind::sigmoid:
        arity(1);
        return sigmoid(inputs[0]);
    case OpKind::embed_lookup: {
        arity(2);
        const auto ids = ids_from_tensor(inputs[1]);
        return embed_lookup(inputs[0], std::span<const std::size_t>(ids));
    }
    }
    shape_fail("primitive_forward", "unknown op kind");
}

} // namespace sentctx::num

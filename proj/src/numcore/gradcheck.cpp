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

#include "sentctx/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sentctx::num {

auto GradCheckReport::passed() const -> bool
{
    return std::all_of(parameters.begin(), parameters.end(),
                       [](const ParameterGradCheck& p) { return p.passed; });
}

auto GradCheckReport::max_relative_error() const -> double
{
    double worst = 0.0;
    for (const auto& p : parameters) {
        worst = std::max(worst, p.max_relative_error);
    }
    return worst;
}

auto GradCheckReport::summary() const -> std::string
{
    std::ostringstream out;
    out.precision(3);
    for (const auto& p : parameters) {
        out << (p.passed ? "ok   " : "FAIL ") << p.name << "  n=" << p.elements_checked
            << "  max_rel=" << std::scientific << p.max_relative_error
            << "  max_abs=" << p.max_absolute_error << std::defaultfloat << '\n';
    }
    return out.str();
}

auto check_gradients(const Fragment& fragment, const Tensor& input,
                     const std::vector<Parameter>& params, const GradCheckOptions& options)
    -> GradCheckReport
{
    if (!(options.step > 0.0)) {
        throw std::invalid_argument("check_gradients: step must be positive");
    }

    for (const auto& p : params) {
        Tensor t = p.tensor;
        (void)t.mutable_grad();
        t.zero_grad();
    }
    {
        Tape tape;
        const Tensor loss = fragment(input);
        tape.backward(loss);
    }

    const auto evaluate = [&]() { return fragment(input).item(); };

    Rng rng(options.seed);
    GradCheckReport report;
    for (const auto& p : params) {
        Tensor param = p.tensor;
        const std::vector<double> analytic(param.grad().begin(), param.grad().end());
        std::vector<std::size_t> elements(param.numel());
        std::iota(elements.begin(), elements.end(), std::size_t { 0 });
        if (options.max_elements_per_parameter > 0
            && elements.size() > options.max_elements_per_parameter) {
            std::shuffle(elements.begin(), elements.end(), rng);
            elements.resize(options.max_elements_per_parameter);
            std::sort(elements.begin(), elements.end());
        }

        ParameterGradCheck check { .name = p.name };
        auto values = param.mutable_values();
        for (const std::size_t i : elements) {
            const double original = values[i];
            values[i] = original + options.step;
            const double plus = evaluate();
            values[i] = original - options.step;
            const double minus = evaluate();
            values[i] = original;

            const double numeric = (plus - minus) / (2.0 * options.step);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max(
                { std::abs(analytic[i]), std::abs(numeric), options.denominator_floor });
            check.max_absolute_error = std::max(check.max_absolute_error, abs_err);
            check.max_relative_error = std::max(check.max_relative_error, abs_err / denom);
            ++check.elements_checked;
        }
        check.passed = check.max_relative_error < options.tolerance;
        report.parameters.push_back(std::move(check));
    }
    return report;
}

} // namespace sentctx::num

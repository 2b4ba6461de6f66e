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

#include "sentctx/numcore/gradcheck.hpp"

#include <string>
#include <vector>

namespace sentctx::harness {

struct ModuleGradCheck {
    std::string module;
    num::GradCheckReport report;
};

/// Finite-difference checks of small instances of every parameterized
/// module: encoder block, direct and weighted aggregation (with fusion),
/// a two-step GMM attention rollout and one decoder step.
auto run_module_gradchecks(const num::GradCheckOptions& options = {})
    -> std::vector<ModuleGradCheck>;

} // namespace sentctx::harness

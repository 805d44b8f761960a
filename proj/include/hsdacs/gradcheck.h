// Copyright 2026 The hsdacs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Finite-difference verification of the reverse-mode gradients.

#ifndef HSDACS_GRADCHECK_H_
#define HSDACS_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hsdacs/config.h"
#include "hsdacs/tensor.h"

namespace hsdacs {

struct GradCheckResult {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double median_rel_error = 0.0;
};

// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-7);

// Compares the taped gradient of the scalar `loss` with respect to every
// element of `inputs` against central differences of step h.
GradCheckResult finite_difference_check(const std::string& name,
                                        const std::function<Tensor()>& loss,
                                        std::vector<Tensor> inputs, double h = 1e-5);

// Small model used for whole-network checks: 2 encoder and 2 decoder layers,
// 2 heads.
ModelConfig grad_check_config(HaltingMode mode);

// Whole-model check of the teacher-forced loss in the given halting mode.
GradCheckResult model_grad_check(HaltingMode mode, std::uint64_t seed = 3);

// Every op-level check followed by the three model checks.
std::vector<GradCheckResult> grad_check_suite(std::uint64_t seed = 3);

}  // namespace hsdacs

#endif  // HSDACS_GRADCHECK_H_

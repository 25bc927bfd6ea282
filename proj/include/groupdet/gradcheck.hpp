#pragma once

#include <functional>
#include <string>
#include <vector>

#include "groupdet/optim.hpp"
#include "groupdet/tensor.hpp"

namespace groupdet {

// Builds the scalar loss graph from the store's (requires_grad) parameters.
using GradCheckFn = std::function<Tensor(ParamStore&)>;

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass = false;
  std::string failure;  // non-empty when the check aborted (non-finite f, ...)
};

// Central differences per coordinate against one reverse-mode pass.
// rel err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-2); the floor
// keeps finite-difference noise on near-zero coordinates from dominating
// while still flagging any real discrepancy at the working scale.
GradCheckReport finite_diff_check(const std::string& name, const GradCheckFn& f, ParamStore& params,
                                  double h = 1e-4, double tol = 1e-4);

}  // namespace groupdet

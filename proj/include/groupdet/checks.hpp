#pragma once

#include <vector>

#include "groupdet/gradcheck.hpp"

namespace groupdet {

// Central-difference verification of every differentiable op, the geometric
// and semantic layers, and the full micro model. Deterministic in seed.
std::vector<GradCheckReport> run_gradcheck_suite(double h, double tol, std::uint64_t seed);

}  // namespace groupdet

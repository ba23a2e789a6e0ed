#pragma once

#include <functional>

#include "ovavss/numcore/tensor.hpp"

namespace ovavss::num {

// Compares the reverse-mode gradient of a scalar-valued f against central
// finite differences, elementwise. Returns the max blended relative error:
// |g_ad - g_fd| / max(|g_ad|, |g_fd|, floor) where floor scales with the
// largest gradient magnitude so components near zero are judged against
// finite-difference noise rather than themselves.
//
// max_probes > 0 checks an evenly strided subset of elements (the analytic
// gradient is still computed in full); 0 checks every element.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps = 1e-5, int max_probes = 0);

}  // namespace ovavss::num

#pragma once

#include <cstddef>
#include <functional>

#include "rfn/autograd.hpp"

namespace rfn {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;  // gradients at worst_index
    double numeric = 0.0;
    std::size_t probes = 0;
};

/// Compares the reverse-mode gradient of a scalar function against central
/// differences (f(x+eps e_i) - f(x-eps e_i)) / 2eps. Relative error per element uses
/// the denominator max(|analytic|, |numeric|, 1e-8).
///
/// `max_probes` limits the number of perturbed elements (evenly strided) for large
/// inputs; 0 checks every element. eps must lie in [1e-6, 1e-3].
template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(const Var<T>&)>& fn, const Tensor<T>& x, double eps = 1e-6,
                           std::size_t max_probes = 0);

}  // namespace rfn

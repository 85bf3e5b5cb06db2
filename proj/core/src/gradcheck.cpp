#include "rfn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace rfn {

template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(const Var<T>&)>& fn, const Tensor<T>& x, double eps,
                           std::size_t max_probes) {
    if (!(eps >= 1e-6 && eps <= 1e-3)) throw UsageError("grad_check: eps must lie in [1e-6, 1e-3]");

    auto input = Var<T>::leaf(x, true);
    Var<T> out = fn(input);
    if (out.value().size() != 1) throw UsageError("grad_check: function output is not scalar: " + out.shape().str());
    backward(out);
    Tensor<T> analytic = input.grad().empty() ? Tensor<T>(x.shape()) : input.grad();

    auto evaluate = [&](const Tensor<T>& at) {
        NoGradGuard guard;
        return static_cast<double>(fn(Var<T>::leaf(at, false)).value().item());
    };

    const std::size_t count = x.size();
    const std::size_t stride = (max_probes == 0 || max_probes >= count) ? 1 : count / max_probes;
    GradCheckResult result;
    Tensor<T> probe = x;
    for (std::size_t i = 0; i < count; i += stride) {
        const T original = probe[i];
        probe[i] = original + static_cast<T>(eps);
        const double plus = evaluate(probe);
        probe[i] = original - static_cast<T>(eps);
        const double minus = evaluate(probe);
        probe[i] = original;

        const double numeric = (plus - minus) / (2.0 * eps);
        const double a = static_cast<double>(analytic[i]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        ++result.probes;
        if (result.probes == 1 || rel > result.max_relative_error) {
            result.max_relative_error = rel;
            result.worst_index = i;
            result.analytic = a;
            result.numeric = numeric;
        }
    }
    return result;
}

template GradCheckResult grad_check(const std::function<Var<float>(const Var<float>&)>&, const Tensor<float>&, double,
                                    std::size_t);
template GradCheckResult grad_check(const std::function<Var<double>(const Var<double>&)>&, const Tensor<double>&,
                                    double, std::size_t);

}  // namespace rfn

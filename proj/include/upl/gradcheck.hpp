#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "upl/autodiff.hpp"

namespace upl {

// Compares analytic gradients against central finite differences,
// coordinate by coordinate. `f` must be a deterministic, reentrant graph
// builder (it is invoked concurrently with perturbed copies of `point`).
// Returns the worst relative error, denominator max(|analytic|, |numeric|, 1e-8).
template <typename T>
double grad_check(const std::function<NodePtr<T>(const NodePtr<T>&)>& f, const Tensor5T<T>& point, T eps) {
    auto leaf = make_leaf(point, true);
    auto loss = f(leaf);
    if (loss->value.numel() != 1) throw std::invalid_argument("grad_check: f must return a scalar node");
    if (!std::isfinite(static_cast<double>(loss->value.data[0]))) {
        throw std::runtime_error("grad_check: non-finite loss value");
    }
    backward(loss);
    const Tensor5T<T> analytic = leaf->grad;

    const std::int64_t n = point.numel();
    std::vector<double> numeric(static_cast<std::size_t>(n));
    bool bad = false;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        Tensor5T<T> plus = point, minus = point;
        plus.data[i] += eps;
        minus.data[i] -= eps;
        const double fp = static_cast<double>(f(make_leaf(plus, false))->value.data[0]);
        const double fm = static_cast<double>(f(make_leaf(minus, false))->value.data[0]);
        if (!std::isfinite(fp) || !std::isfinite(fm)) bad = true;
        numeric[static_cast<std::size_t>(i)] = (fp - fm) / (2.0 * static_cast<double>(eps));
    }
    if (bad) throw std::runtime_error("grad_check: non-finite values encountered");

    double worst = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = static_cast<double>(analytic.data[i]);
        const double m = numeric[static_cast<std::size_t>(i)];
        const double denom = std::max({std::abs(a), std::abs(m), 1e-8});
        worst = std::max(worst, std::abs(a - m) / denom);
    }
    return worst;
}

}  // namespace upl

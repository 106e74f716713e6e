#pragma once

#include <vector>

#include "fabulight/common.hpp"
#include "fabulight/tensor.hpp"

namespace testutil {

template <typename S>
fabulight::Tensor<S> random_tensor(fabulight::Shape shape, fabulight::Rng& rng, double lo = -1.0,
                                   double hi = 1.0, bool requires_grad = false) {
    std::vector<S> data(fabulight::shape_numel(shape));
    for (auto& v : data) v = static_cast<S>(rng.uniform(lo, hi));
    auto t = fabulight::Tensor<S>(std::move(shape), std::move(data));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

template <typename S>
double max_abs_diff(const fabulight::Tensor<S>& a, const fabulight::Tensor<S>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return worst;
}

template <typename S>
double max_abs_diff(const std::vector<S>& a, const std::vector<S>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return worst;
}

}  // namespace testutil

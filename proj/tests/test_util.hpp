#pragma once

#include "upl/rng.hpp"
#include "upl/tensor.hpp"

namespace testutil {

template <typename T>
upl::Tensor5T<T> random_tensor(const upl::Shape5& shape, upl::Rng& rng, double lo = -1.0, double hi = 1.0) {
    upl::Tensor5T<T> t(shape);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

}  // namespace testutil

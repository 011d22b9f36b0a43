#include "haaseg/rng.hpp"

namespace haaseg {

Tensor normal_tensor(Shape shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.mutable_data())
        v = rng.normal(0.0, stddev);
    return t;
}

Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.mutable_data())
        v = rng.uniform(lo, hi);
    return t;
}

} // namespace haaseg

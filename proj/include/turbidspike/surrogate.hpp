#pragma once

#include <cmath>

namespace turbidspike::snn {

inline constexpr double kPi = 3.14159265358979323846;

// Smooth arctangent stand-in for the Heaviside spike function. The forward
// pass keeps the hard spike; the backward pass substitutes surrogate_grad
// for the Heaviside derivative so gradients keep flowing through silent
// neurons.
template <typename S>
S surrogate_sigma(S u, S theta, S k) {
    return std::atan(static_cast<S>(kPi) * k * (u - theta)) / static_cast<S>(kPi) +
           S(0.5);
}

// d/du of surrogate_sigma: k / (1 + (pi*k*(u-theta))^2). Strictly positive
// everywhere, peaks at k on the threshold, integrates to 1 over u.
template <typename S>
S surrogate_grad(S u, S theta, S k) {
    const S z = static_cast<S>(kPi) * k * (u - theta);
    return k / (S(1) + z * z);
}

}  // namespace turbidspike::snn

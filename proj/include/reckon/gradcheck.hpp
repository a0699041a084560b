#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "reckon/tensor.hpp"

namespace reckon::ad {

// Builds a differentiable scalar from the given parameters. Invoked both on
// a fresh tape (analytic pass) and with recording off (perturbed passes), so
// it must not capture tape state of its own.
using ScalarFn = std::function<Tensor(std::span<const Tensor> params)>;

// Max over checked coordinates of |analytic - central| / (|central| + 1e-8).
// With max_coords >= 0, at most that many coordinates per parameter are
// checked, sampled deterministically from `seed`. Perturbs parameters in
// place and restores them; throws if f is non-finite at a perturbed point.
double finite_difference_check(const ScalarFn& f, std::span<const Tensor> params, double eps,
                               long max_coords = -1, std::uint64_t seed = 7);

}  // namespace reckon::ad

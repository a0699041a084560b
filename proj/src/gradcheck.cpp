#include "reckon/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "reckon/rng.hpp"
#include "reckon/tape.hpp"

namespace reckon::ad {

double finite_difference_check(const ScalarFn& f, std::span<const Tensor> params, double eps,
                               long max_coords, std::uint64_t seed) {
  if (eps <= 0.0) throw std::runtime_error("finite_difference_check: eps must be > 0");

  std::vector<Tensor> grads;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f(params);
    grads = tape.gradients(out, params, false);
  }

  auto eval = [&]() {
    NoGradScope ng;
    double v = f(params).item();
    if (!std::isfinite(v)) {
      throw std::runtime_error("finite_difference_check: non-finite value at perturbed point");
    }
    return v;
  };

  Rng rng(seed);
  double max_rel = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p];
    const long n = t.numel();
    std::vector<long> coords;
    if (max_coords >= 0 && max_coords < n) {
      coords = rng.sample_without_replacement(n, max_coords);
    } else {
      coords.resize(static_cast<size_t>(n));
      for (long i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }
    for (long c : coords) {
      double* x = t.raw() + c;
      const double orig = *x;
      *x = orig + eps;
      const double fp = eval();
      *x = orig - eps;
      const double fm = eval();
      *x = orig;
      const double central = (fp - fm) / (2.0 * eps);
      const double analytic = grads[p].raw()[c];
      const double rel = std::abs(analytic - central) / (std::abs(central) + 1e-8);
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace reckon::ad

#pragma once

// Central-difference gradient checking. Runs entirely in 64-bit; the scalar
// function under test is evaluated through the same op set as training, just
// instantiated for double.

#include <functional>
#include <limits>

#include "minclip/tensor.hpp"

namespace minclip {

// f must be scalar-valued and re-evaluable at perturbed copies of `point`.
// Returns max over coordinates of |analytic - central| / max(1, |analytic|).
// A non-finite difference reports +Inf rather than throwing.
inline double grad_check(const std::function<DTensor(const DTensor&)>& f, const DTensor& point,
                         double eps) {
  DTensor x = point.detach_copy(/*requires_grad=*/true);
  DTensor y = f(x);
  if (y.numel() != 1) throw NonScalarRoot("grad_check: f must be scalar-valued");
  y.backward();
  std::vector<double> analytic = x.has_grad() ? x.grad() : std::vector<double>(x.numel(), 0.0);

  double worst = 0.0;
  DTensor probe = point.detach_copy(false);
  for (std::int64_t i = 0; i < probe.numel(); ++i) {
    const double orig = probe.data()[i];
    double fp, fm;
    {
      NoGradGuard ng;
      probe.data()[i] = orig + eps;
      fp = f(probe).item();
      probe.data()[i] = orig - eps;
      fm = f(probe).item();
      probe.data()[i] = orig;
    }
    const double central = (fp - fm) / (2.0 * eps);
    const double a = analytic[static_cast<size_t>(i)];
    double err;
    if (!std::isfinite(central) || !std::isfinite(a)) {
      err = std::numeric_limits<double>::infinity();
    } else {
      err = std::abs(a - central) / std::max(1.0, std::abs(a));
    }
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace minclip

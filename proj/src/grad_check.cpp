#include "sdbert/grad_check.hpp"

#include <cmath>

namespace sdbert {

namespace {

double evaluate_at(const TapeFn& f, const Tensor& x) {
  Tensor local = x;
  local.requires_grad = false;
  local.grad.clear();
  Tape tape;
  Tape::Ref in = tape.watch(local);
  const double v = tape.scalar_value(f(tape, in));
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite evaluation");
  return v;
}

}  // namespace

double grad_check(const TapeFn& f, const Tensor& x, double step) {
  // Analytic gradient through the tape.
  Tensor probe = x;
  probe.requires_grad = true;
  probe.grad.clear();
  Tape tape;
  Tape::Ref in = tape.watch(probe);
  tape.backward(f(tape, in));

  double max_err = 0.0;
  Tensor shifted = x;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const double orig = shifted.values[i];
    shifted.values[i] = orig + step;
    const double up = evaluate_at(f, shifted);
    shifted.values[i] = orig - step;
    const double down = evaluate_at(f, shifted);
    shifted.values[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = probe.grad[i];
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    max_err = std::max(max_err, std::fabs(analytic - numeric) / denom);
  }
  return max_err;
}

}  // namespace sdbert

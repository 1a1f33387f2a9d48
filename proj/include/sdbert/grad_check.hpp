#ifndef SDBERT_GRAD_CHECK_HPP_
#define SDBERT_GRAD_CHECK_HPP_

#include <functional>

#include "sdbert/tape.hpp"

namespace sdbert {

// A differentiable scalar-valued function of one tensor, expressed as a tape
// program: given a tape and the ref of the (already watched/constant) input,
// it must return the ref of a scalar output.
using TapeFn = std::function<Tape::Ref(Tape&, Tape::Ref)>;

// Compares the analytic gradient of f at x against central finite differences
// with the given step. Returns the max over elements of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
// Raises NumericError if any evaluation is non-finite.
double grad_check(const TapeFn& f, const Tensor& x, double step = 1e-5);

}  // namespace sdbert

#endif  // SDBERT_GRAD_CHECK_HPP_

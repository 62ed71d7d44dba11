#pragma once

#include <functional>
#include <span>
#include <string>

#include "polarbev/tape.hpp"

namespace polarbev::tc {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::int64_t checked = 0;
    std::int64_t excluded = 0; // elements skipped because a kink sits inside the step
    bool pass = false;
    std::string worst; // leaf index of the worst element, for diagnostics
};

// Central finite differences against reverse-mode gradients for a scalar
// function rebuilt on a fresh tape per evaluation. Elements where the one-sided
// differences disagree (a kink within +-step, e.g. relu at exactly 0) are
// excluded from the comparison and counted. Throws NumericalError if any
// evaluation is non-finite.
GradCheckReport grad_check(const std::function<Tensor<double>(Tape<double>&)>& f,
                           std::span<Tensor<double>* const> leaves, double step, double tol);

} // namespace polarbev::tc

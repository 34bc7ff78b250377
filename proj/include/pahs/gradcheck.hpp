#ifndef PAHS_GRADCHECK_HPP
#define PAHS_GRADCHECK_HPP

#include <string>
#include <vector>

#include "pahs/tensor.hpp"

namespace pahs {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    bool all_pass = true;
    double seconds = 0.0;
};

// Central-difference verification (64-bit, perturbation 1e-5) of every
// primitive kernel over `seeds` random instances at 1e-4 relative tolerance,
// plus one full recurrent cell step (16x16 input, c=12, n=1) at 1e-3 with
// sampled parameter elements.
GradCheckReport run_gradient_suite(int seeds = 20, bool include_cell = true);

} // namespace pahs

#endif

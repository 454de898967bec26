#pragma once

#include <functional>
#include <string>

#include "navrep/params.hpp"

namespace navrep {

// Builds a scalar loss on the given tape. Must be a pure function of the
// parameters (fixed inputs, fixed action choices, no fresh randomness), since
// it is re-evaluated under parameter perturbations.
using LossBuilder = std::function<Var(Tape&, ParamCtx&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares reverse-mode gradients against central finite differences with
// step 1e-5 on a sampled subset of coordinates per parameter (perturbing all
// coordinates of every tensor would be quadratic in model size). The relative
// error is |a - n| / max(|a|, |n|, 1e-3); the floor keeps finite-difference
// roundoff (~1e-8 absolute) from dominating near-zero gradients.
GradCheckResult grad_check(ParamStore& store, const LossBuilder& f, int coords_per_param, Rng& rng,
                           double step = 1e-5);

}  // namespace navrep

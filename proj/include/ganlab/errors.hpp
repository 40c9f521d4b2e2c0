#pragma once

#include <stdexcept>
#include <string>

namespace ganlab {

// Invalid argument values: empty grids, non-finite inputs, size mismatches.
struct invalid_input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Unknown loss kind requested from make_loss.
struct unsupported_loss_error : invalid_input_error {
    using invalid_input_error::invalid_input_error;
};

// Inconsistent method/loss/state combinations.
struct config_error : invalid_input_error {
    using invalid_input_error::invalid_input_error;
};

// The method has no differentiable equilibrium (WGAN-GP).
struct no_equilibrium_error : std::domain_error {
    using std::domain_error::domain_error;
};

// All eigenvalues must have negative real part for a stable step to exist.
struct no_stable_step_error : std::domain_error {
    using std::domain_error::domain_error;
};

// An iterative numeric routine failed to meet its contract.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Too few usable data points for an estimate.
struct insufficient_data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Brute-force oracle called beyond its size cap.
struct too_large_error : invalid_input_error {
    using invalid_input_error::invalid_input_error;
};

// A field evaluation left the finite region.
struct invalid_region_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace ganlab

#pragma once

#include "rece/bounds.hpp"
#include "rece/derivation.hpp"
#include "rece/rece_driver.hpp"

#include <string>

namespace rece {

// One JSON object per line, no trailing newline. Field names are stable:
// epoch, tasks[].task, tasks[].residual, tasks[].c_prime_norm,
// tasks[].erasure_residual, drift[].probe, drift[].value, wall_time_s,
// bound_chain, warnings.

std::string to_json_line(const EpochReport& report, bool omit_timing = false);
std::string to_json_line(const BoundReport& report);
std::string to_json_line(const DerivationResult& result);
std::string to_json_line(const FidelityReport& report);

}  // namespace rece

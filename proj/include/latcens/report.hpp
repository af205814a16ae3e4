#pragma once

#include <iosfwd>
#include <string>

#include "latcens/estimate.hpp"

namespace latcens {
namespace report {

// Variance rows drop their var() wrapper for display, matching the reference
// printouts; every other parameter keeps its structural name.
std::string display_name(const std::string& name, model::Group group);

// Grouped coefficient table: Measurements, Regressions, Intercepts, Residual
// Variances. Variance rows print no p-value (their reference distribution is
// not normal under the boundary-free log parameterization used internally).
void print_table(std::ostream& out, const est::FitResult& fit,
                 const model::ParameterMap& pm);

// Machine-readable result with a fixed field order, so identical fits
// serialize byte-identically. schema field = 1.
std::string to_json(const est::FitResult& fit, const model::ParameterMap& pm,
                    const std::string& command);

}  // namespace report
}  // namespace latcens

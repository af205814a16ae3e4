#pragma once

// Shared internals of the full- and composite-likelihood fitters.

#include <functional>
#include <string>

#include "latcens/estimate.hpp"

namespace latcens {
namespace est {

struct AscentResult {
  Vec theta;
  Mat scores;  // unit x parameter rows at the final point
  double value = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  bool search_failed = false;
  double gradient_norm = std::numeric_limits<double>::quiet_NaN();
};

// BHHH/BFGS ascent on an objective that decomposes into per-unit score rows
// (total gradient = column sums). `value` evaluates the objective alone for
// line-search trials; `value_and_scores` additionally fills the score matrix.
// NumericalError from a trial point rejects the step; a non-finite objective
// at the start throws. `per_unit` scales the score tolerance by the
// objective's magnitude per contributing unit.
AscentResult maximize_by_scores(const std::function<double(const Vec&)>& value,
                                const std::function<double(const Vec&, Mat&)>& value_and_scores,
                                Vec theta, int per_unit, const FitOptions& opts);

// Inverse via Cholesky with a residual check that rejects factorizations that
// slipped through on a numerically singular matrix. False when singular.
bool psd_inverse(const Mat& a, Mat& out);

// Natural-scale estimates, delta-method standard errors, z and p columns from
// an internal-scale vcov (or all-NaN when have_vcov is false).
void fill_inference(FitResult& res, const model::ParameterMap& pm, bool have_vcov,
                    const Mat& vcov);

void append_note(std::string& note, const std::string& msg);

}  // namespace est
}  // namespace latcens

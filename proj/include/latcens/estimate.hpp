#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latcens/likelihood.hpp"

namespace latcens {
namespace est {

using model::Mat;
using model::Vec;

enum class Algorithm { Bhhh, Bfgs };

struct FitOptions {
  int max_iterations = 500;
  double score_tol = 1e-6;  // convergence at max|score| < score_tol * max(1, |loglik|/n)
  double step_tol = 1e-9;   // ... and relative step below this
  double armijo_c = 1e-4;
  int max_halvings = 50;
  Algorithm algorithm = Algorithm::Bhhh;
  std::optional<Vec> start;  // internal scale; data-driven defaults otherwise
  mvn::CdfConfig cdf{};
  // Called after every accepted step.
  std::function<void(int iter, double loglik, double max_score)> on_iteration;
};

struct FitResult {
  std::vector<std::string> names;
  Vec theta_hat;  // internal scale (variances as logs)
  double loglik = std::numeric_limits<double>::quiet_NaN();
  Mat vcov;       // internal scale, inverse of the score outer product
  Vec se;         // sqrt(diag(vcov))
  Vec estimate;   // natural scale
  Vec se_nat;     // natural scale, delta method
  Vec z;          // estimate / se_nat
  Vec p;          // two-sided normal; NaN on positive-variance rows
  int iterations = 0;
  bool converged = false;
  double gradient_norm = std::numeric_limits<double>::quiet_NaN();  // max|score|
  int n_rows = 0;      // likelihood-contributing rows
  bool composite = false;  // true when produced by a composite-likelihood fit
  std::string note;    // nonempty when standard errors could not be computed
};

// Maximum likelihood via BHHH (score outer product as curvature, ridged when
// singular, Armijo backtracking) or a BFGS fallback. Hitting the iteration cap
// or a failed line search yields converged = false, not an exception.
FitResult fit_mle(const model::ParameterMap& pm, const data::Dataset& d,
                  const FitOptions& opts = {});

// Outer product of the per-observation scores at theta.
Mat information(const model::ParameterMap& pm, const Vec& theta,
                const data::Dataset& d, const lik::EvalOptions& opts = {});

struct LrResult {
  double stat = 0.0;
  int df = 0;
  double p = 1.0;
};

// Likelihood-ratio test of a restricted model against a full model it nests
// in (checked by parameter-name inclusion).
LrResult lr_test(const FitResult& restricted, const FitResult& full);

// P(item = 1 | eta, covariates) at the fitted parameters; the linear
// predictor includes any random-slope terms evaluated at the covariates.
double conditional_probability(const FitResult& fit, const model::ParameterMap& pm,
                               const std::string& item, const Vec& eta,
                               const Vec& covariates = Vec(0));

}  // namespace est
}  // namespace latcens

#pragma once

#include "latcens/param_map.hpp"

namespace latcens {
namespace model {

// Model-implied moments for one covariate configuration, with analytic
// derivatives with respect to the internal parameter vector.
struct MomentSystem {
  Vec xi;      // p
  Mat omega;   // p x p, symmetric
  Mat dxi;     // p x d
  Mat domega;  // p^2 x d; column t is vec of the symmetric d(omega)/d(theta_t)
};

// covariates: q-vector aligned with pm.spec.covariates (moderators included).
// with_derivs=false leaves dxi/domega empty, skipping the assembly work.
MomentSystem implied_moments(const ParameterMap& pm, const Vec& theta,
                             const Vec& covariates, bool with_derivs = true);

}  // namespace model

namespace data {
struct Dataset;
}

namespace model {

// Deterministic starting point on the internal scale: intercepts from
// non-censored column means, variances from column variances (floored at
// 0.1), loadings 1, slopes/covariances 0, regression slopes from pairwise
// least squares on non-censored rows (latent predictors proxied by their
// reference indicator).
Vec starting_values(const ParameterMap& pm, const data::Dataset& d);

}  // namespace model
}  // namespace latcens

#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "latcens/common.hpp"

namespace latcens {
namespace mvn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Mean vector and covariance of a (multivariate) Gaussian.
struct GaussianMoments {
  Vec mean;
  Mat cov;

  int dim() const { return static_cast<int>(mean.size()); }

  // Throws NumericalError unless cov is symmetric positive definite with
  // condition number below cond_limit.
  void validate(double cond_limit = 1e12) const;
};

// alpha = P(X <= y), m_k = E[(X_k - mu_k) 1{X <= y}],
// v_kl = E[(X_k - mu_k)(X_l - mu_l) 1{X <= y}].
struct TruncatedMoments {
  double alpha = 0.0;
  Vec m;
  Mat v;
};

struct CdfResult {
  double p = 0.0;
  double err = 0.0;  // estimated absolute error
};

// Knobs for the rectangle-probability engine. Defaults are used everywhere;
// the struct mainly exists so tests can force the lattice path or change the
// deterministic shift seed.
struct CdfConfig {
  double tol = 1e-9;          // absolute error target (lattice floor: 1e-6)
  std::uint64_t seed = 0x9d2c5681u;  // lattice shift stream (k >= 5 only)
  int shifts = 12;
  int max_points = 1 << 19;   // per shift, lattice path
  int min_dim_lattice = 5;    // dimensions below this use quadrature
};

double norm_pdf(double z);
double norm_cdf(double z);
double norm_quantile(double p);  // inverse of norm_cdf

// Standardized bivariate CDF P(Z1 <= h, Z2 <= k) with correlation rho.
double bvn_cdf(double h, double k, double rho);

// Standardized bivariate density at (h, k).
double bvn_pdf(double h, double k, double rho);

double logpdf(const Vec& x, const GaussianMoments& g);

// P(X <= y) componentwise. Entries of y may be +inf (coordinate dropped).
CdfResult cdf(const Vec& y, const GaussianMoments& g, const CdfConfig& cfg = {});

// Gradient of y -> cdf(y, g). Row i: phi(y_i; marginal) * CDF of the
// conditional (k-1)-dimensional distribution given X_i = y_i.
Vec cdf_gradient(const Vec& y, const GaussianMoments& g, const CdfConfig& cfg = {});

// Hessian of y -> cdf(y, g); symmetric, diagonal recovered from the identity
// sum_j cov_ij H_jk = -delta... (single-index recursion, see implementation).
Mat cdf_hessian(const Vec& y, const GaussianMoments& g, const CdfConfig& cfg = {});

// Lower-orthant truncated moments via the CDF derivative identities
// m = -Lam R D, v = alpha Sigma + Lam R H R Lam.
TruncatedMoments truncated_moments(const Vec& y, const GaussianMoments& g,
                                   const CdfConfig& cfg = {});

// Gradient of theta -> cdf(y; mu(theta), Sigma(theta)) given the stacks
// dmu (k x d) and dsigma (k^2 x d, columns = vec of symmetric d Sigma/d theta_t):
//   0.5[ -alpha tr(S^-1 dS) + tr(S^-1 dS S^-1 v) ] + dmu' S^-1 m.
Vec cdf_param_gradient(const Vec& y, const GaussianMoments& g, const Mat& dmu,
                       const Mat& dsigma, const CdfConfig& cfg = {});

// Same, reusing truncated moments already computed for y under g.
Vec cdf_param_gradient(const TruncatedMoments& tm, const GaussianMoments& g,
                       const Mat& dmu, const Mat& dsigma);

}  // namespace mvn
}  // namespace latcens

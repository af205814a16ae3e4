#include "latcens/mvn.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace latcens {
namespace mvn {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kTwoPi = 6.2831853071794896619;

// Standardized bounds beyond these are treated as +/- infinity.
constexpr double kUpperInf = 8.2;
constexpr double kLowerInf = -37.5;

double sd_clamp(double r) { return std::clamp(r, -1.0, 1.0); }

std::vector<int> first_primes(int m) {
  std::vector<int> p;
  for (int n = 2; static_cast<int>(p.size()) < m; ++n) {
    bool prime = true;
    for (int d : p) {
      if (d * d > n) break;
      if (n % d == 0) { prime = false; break; }
    }
    if (prime) p.push_back(n);
  }
  return p;
}

// Conditional of the coordinates `keep` given X[given] = values.
GaussianMoments condition_on(const GaussianMoments& g, const std::vector<int>& keep,
                             const std::vector<int>& given, const Vec& values) {
  const int nk = static_cast<int>(keep.size());
  const int ng = static_cast<int>(given.size());
  Mat Saa(nk, nk), Sab(nk, ng), Sbb(ng, ng);
  Vec mu_a(nk), resid(ng);
  for (int i = 0; i < nk; ++i) {
    mu_a(i) = g.mean(keep[i]);
    for (int j = 0; j < nk; ++j) Saa(i, j) = g.cov(keep[i], keep[j]);
    for (int j = 0; j < ng; ++j) Sab(i, j) = g.cov(keep[i], given[j]);
  }
  for (int i = 0; i < ng; ++i) {
    resid(i) = values(i) - g.mean(given[i]);
    for (int j = 0; j < ng; ++j) Sbb(i, j) = g.cov(given[i], given[j]);
  }
  Eigen::LLT<Mat> llt(Sbb);
  if (llt.info() != Eigen::Success)
    throw NumericalError("conditioning block not positive definite");
  Mat W = llt.solve(Sab.transpose());  // Sbb^-1 Sab'
  GaussianMoments out;
  out.mean = mu_a + W.transpose() * resid;
  out.cov = Saa - Sab * W;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

// Deterministic reduction for 3- and 4-dimensional standardized rectangles:
// condition on the coordinate with the smallest bound and integrate its
// density against the conditional CDF with adaptive Gauss-Kronrod.
double cdf_reduced(const Vec& b, const Mat& R, double rtol) {
  const int k = static_cast<int>(b.size());
  int jc = 0;
  for (int j = 1; j < k; ++j)
    if (b(j) < b(jc)) jc = j;

  double hi = std::min(b(jc), 8.5);
  double lo = -std::numeric_limits<double>::infinity();

  std::vector<int> rest;
  std::vector<double> r, s, bb;
  for (int j = 0; j < k; ++j) {
    if (j == jc) continue;
    const double rj = sd_clamp(R(j, jc));
    const double s2 = 1.0 - rj * rj;
    if (s2 < 1e-12) {
      // Degenerate conditional: the coordinate is +/- the integration
      // variable, so its bound folds into the integration limits.
      if (rj > 0.0) hi = std::min(hi, b(j));
      else lo = std::max(lo, -b(j));
      continue;
    }
    rest.push_back(j);
    r.push_back(rj);
    s.push_back(std::sqrt(s2));
    bb.push_back(b(j));
  }
  // Below this the density contributes nothing at the accuracy target.
  lo = std::max(lo, std::min(-12.0, hi - 6.0));
  if (lo >= hi) return 0.0;

  const int m = static_cast<int>(rest.size());
  if (m == 0) return std::max(0.0, norm_cdf(hi) - norm_cdf(lo));

  Mat Rc(m, m);
  for (int i = 0; i < m; ++i) {
    Rc(i, i) = 1.0;
    for (int j = i + 1; j < m; ++j) {
      double rc = (R(rest[i], rest[j]) - r[i] * r[j]) / (s[i] * s[j]);
      Rc(i, j) = Rc(j, i) = sd_clamp(rc);
    }
  }

  auto inner = [&](double x) -> double {
    if (m == 1) return norm_cdf((bb[0] - r[0] * x) / s[0]);
    if (m == 2)
      return bvn_cdf((bb[0] - r[0] * x) / s[0], (bb[1] - r[1] * x) / s[1], Rc(0, 1));
    Vec zc(m);
    for (int i = 0; i < m; ++i) zc(i) = (bb[i] - r[i] * x) / s[i];
    return cdf_reduced(zc, Rc, std::max(rtol * 0.1, 1e-13));
  };
  auto f = [&](double x) { return norm_pdf(x) * inner(x); };

  double err = 0.0;
  double p = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, lo, hi, 14, rtol, &err);
  return std::clamp(p, 0.0, 1.0);
}

// Reordered Cholesky in the style of Genz: at each stage pick the variable
// whose conditional probability is smallest, tracking the expected value of
// the implied truncated standard normal.
void genz_order(Vec& b, Mat& C, Mat& L) {
  const int k = static_cast<int>(b.size());
  L.setZero(k, k);
  Vec y(k);
  for (int i = 0; i < k; ++i) {
    int best = i;
    double best_z = std::numeric_limits<double>::infinity();
    for (int j = i; j < k; ++j) {
      double s2 = C(j, j) - L.row(j).head(i).squaredNorm();
      s2 = std::max(s2, 1e-14);
      const double z = (b(j) - L.row(j).head(i).dot(y.head(i))) / std::sqrt(s2);
      if (z < best_z) { best_z = z; best = j; }
    }
    if (best != i) {
      std::swap(b(i), b(best));
      C.row(i).swap(C.row(best));
      C.col(i).swap(C.col(best));
      L.row(i).head(i).swap(L.row(best).head(i));
    }
    double s2 = C(i, i) - L.row(i).head(i).squaredNorm();
    L(i, i) = std::sqrt(std::max(s2, 1e-14));
    for (int j = i + 1; j < k; ++j)
      L(j, i) = (C(j, i) - L.row(j).head(i).dot(L.row(i).head(i))) / L(i, i);
    const double zhat = (b(i) - L.row(i).head(i).dot(y.head(i))) / L(i, i);
    const double e = norm_cdf(zhat);
    y(i) = (zhat < -10.0) ? zhat - 1.0 / zhat : -norm_pdf(zhat) / std::max(e, 1e-300);
  }
}

double lattice_point(const Vec& b, const Mat& L, double e1, const double* w) {
  const int k = static_cast<int>(b.size());
  double f = e1;
  double eprev = e1;
  double y[64];
  for (int i = 1; i < k; ++i) {
    const double u = std::clamp(w[i - 1] * eprev, 1e-320, 1.0 - 1e-16);
    y[i - 1] = norm_quantile(u);
    double num = b(i);
    for (int m = 0; m < i; ++m) num -= L(i, m) * y[m];
    eprev = norm_cdf(num / L(i, i));
    f *= eprev;
  }
  return f;
}

// Randomized rank-1 lattice (Richtmyer generators, baker transform) over the
// sequential-conditioning integrand; error estimate is 3 sd over the shifts.
CdfResult lattice_cdf(Vec b, Mat R, double tol, const CdfConfig& cfg) {
  const int k = static_cast<int>(b.size());
  if (k > 64) throw NumericalError("rectangle probability limited to 64 dimensions");
  Mat L;
  genz_order(b, R, L);
  const double e1 = norm_cdf(b(0) / L(0, 0));
  if (e1 <= 0.0) return {0.0, 0.0};

  const int m = k - 1;
  const auto primes = first_primes(m);
  std::vector<double> q(m);
  for (int i = 0; i < m; ++i) {
    double s = std::sqrt(static_cast<double>(primes[i]));
    q[i] = s - std::floor(s);
  }

  const int shifts = std::max(2, cfg.shifts);
  std::vector<double> shift(static_cast<size_t>(shifts) * m);
  {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (double& v : shift) v = unif(rng);
  }

  std::vector<double> w(m);
  double est = 0.0, err = 0.0;
  for (int n = 1 << 12; ; n <<= 2) {
    double mean = 0.0, m2 = 0.0;
    for (int s = 0; s < shifts; ++s) {
      const double* sh = &shift[static_cast<size_t>(s) * m];
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < m; ++i) {
          double t = j * q[i] + sh[i];
          t -= std::floor(t);
          w[i] = std::abs(2.0 * t - 1.0);
        }
        acc += (lattice_point(b, L, e1, w.data()) - acc) / (j + 1);
      }
      const double d = acc - mean;
      mean += d / (s + 1);
      m2 += d * (acc - mean);
    }
    est = mean;
    err = 3.0 * std::sqrt(m2 / (shifts - 1) / shifts);
    if (err <= tol || n >= cfg.max_points) break;
  }
  return {std::clamp(est, 0.0, 1.0), err};
}

struct Standardized {
  std::vector<int> idx;  // finite coordinates, original indices
  Vec z;
  Mat R;
  Vec sd;
  bool underflow = false;
};

Standardized standardize(const Vec& y, const GaussianMoments& g) {
  const int k = g.dim();
  Standardized st;
  st.sd.resize(k);
  for (int i = 0; i < k; ++i) {
    const double v = g.cov(i, i);
    if (!(v > 0.0)) throw NumericalError("zero marginal variance in covariance");
    st.sd(i) = std::sqrt(v);
  }
  std::vector<double> zs;
  for (int i = 0; i < k; ++i) {
    if (std::isnan(y(i))) throw NumericalError("NaN bound in rectangle probability");
    const double z = (y(i) - g.mean(i)) / st.sd(i);
    if (z >= kUpperInf) continue;  // infinite upper bound
    if (z <= kLowerInf) st.underflow = true;
    st.idx.push_back(i);
    zs.push_back(z);
  }
  const int m = static_cast<int>(st.idx.size());
  st.z = Eigen::Map<Vec>(zs.data(), m);
  st.R.resize(m, m);
  for (int i = 0; i < m; ++i) {
    st.R(i, i) = 1.0;
    for (int j = i + 1; j < m; ++j) {
      const double r =
          g.cov(st.idx[i], st.idx[j]) / (st.sd(st.idx[i]) * st.sd(st.idx[j]));
      st.R(i, j) = st.R(j, i) = sd_clamp(r);
    }
  }
  return st;
}

}  // namespace

void GaussianMoments::validate(double cond_limit) const {
  const int k = dim();
  if (cov.rows() != k || cov.cols() != k)
    throw NumericalError("covariance dimension mismatch");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw NumericalError("covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(cov, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) throw NumericalError("covariance not positive definite");
  if (hi / lo > cond_limit)
    throw NumericalError(
        "covariance nearly singular (condition number above 1e12); "
        "check identification constraints");
}

double norm_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double norm_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double norm_quantile(double p) {
  p = std::clamp(p, 1e-320, 1.0 - 1e-16);
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double bvn_pdf(double h, double k, double rho) {
  rho = sd_clamp(rho);
  const double o = 1.0 - rho * rho;
  if (o <= 0.0) throw NumericalError("degenerate bivariate density");
  return std::exp(-0.5 * (h * h - 2.0 * rho * h * k + k * k) / o) /
         (kTwoPi * std::sqrt(o));
}

double bvn_cdf(double h, double k, double rho) {
  rho = sd_clamp(rho);
  if (h >= kUpperInf && k >= kUpperInf) return 1.0;
  if (h >= kUpperInf) return norm_cdf(k);
  if (k >= kUpperInf) return norm_cdf(h);
  if (h <= kLowerInf || k <= kLowerInf) return 0.0;
  if (rho >= 1.0 - 1e-14) return norm_cdf(std::min(h, k));
  if (rho <= -1.0 + 1e-14) return std::max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0);

  // dPhi2/drho is the bivariate density; substituting rho = sin t gives a
  // smooth integrand on [0, asin rho].
  auto f = [&](double t) {
    const double sn = std::sin(t);
    return std::exp(-0.5 * (h * h + k * k - 2.0 * h * k * sn) / (1.0 - sn * sn));
  };
  const double cut = std::clamp(rho, -0.925, 0.925);
  const double a = std::asin(cut);
  double p = norm_cdf(h) * norm_cdf(k) +
             boost::math::quadrature::gauss<double, 25>::integrate(f, 0.0, a) / kTwoPi;
  if (std::abs(rho) > 0.925) {
    double err = 0.0;
    p += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
             f, a, std::asin(rho), 12, 1e-13, &err) /
         kTwoPi;
  }
  return std::clamp(p, 0.0, 1.0);
}

double logpdf(const Vec& x, const GaussianMoments& g) {
  const int k = g.dim();
  Eigen::LLT<Mat> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance not positive definite");
  const Vec r = x - g.mean;
  const Vec half = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (int i = 0; i < k; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (k * kLog2Pi + logdet + half.squaredNorm());
}

CdfResult cdf(const Vec& y, const GaussianMoments& g, const CdfConfig& cfg) {
  if (y.size() != g.dim()) throw NumericalError("bound dimension mismatch");
  const Standardized st = standardize(y, g);
  if (st.underflow) return {0.0, 0.0};
  const int m = static_cast<int>(st.idx.size());
  if (m == 0) return {1.0, 0.0};
  if (m == 1) return {norm_cdf(st.z(0)), 1e-16};
  if (m == 2) return {bvn_cdf(st.z(0), st.z(1), st.R(0, 1)), 5e-15};
  if (m < cfg.min_dim_lattice) {
    const double rtol = std::min(m == 3 ? 1e-11 : 1e-10, cfg.tol);
    const double p = cdf_reduced(st.z, st.R, rtol);
    return {p, std::max(1e-15, rtol * p)};
  }
  return lattice_cdf(st.z, st.R, std::max(cfg.tol, 1e-6), cfg);
}

Vec cdf_gradient(const Vec& y, const GaussianMoments& g, const CdfConfig& cfg) {
  const int k = g.dim();
  Vec grad = Vec::Zero(k);
  for (int i = 0; i < k; ++i) {
    const double sd = std::sqrt(g.cov(i, i));
    const double z = (y(i) - g.mean(i)) / sd;
    if (z >= kUpperInf || z <= kLowerInf) continue;
    const double dens = norm_pdf(z) / sd;
    if (k == 1) {
      grad(i) = dens;
      continue;
    }
    std::vector<int> keep;
    for (int j = 0; j < k; ++j)
      if (j != i) keep.push_back(j);
    Vec val(1);
    val(0) = y(i);
    const GaussianMoments cond = condition_on(g, keep, {i}, val);
    Vec sub(k - 1);
    for (size_t j = 0; j < keep.size(); ++j) sub(j) = y(keep[j]);
    grad(i) = dens * cdf(sub, cond, cfg).p;
  }
  return grad;
}

Mat cdf_hessian(const Vec& y, const GaussianMoments& g, const CdfConfig& cfg) {
  const int k = g.dim();
  const Vec grad = cdf_gradient(y, g, cfg);
  Mat H = Mat::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    const double zi = (y(i) - g.mean(i)) / std::sqrt(g.cov(i, i));
    if (zi >= kUpperInf || zi <= kLowerInf) continue;
    for (int j = i + 1; j < k; ++j) {
      const double zj = (y(j) - g.mean(j)) / std::sqrt(g.cov(j, j));
      if (zj >= kUpperInf || zj <= kLowerInf) continue;
      const double si = std::sqrt(g.cov(i, i)), sj = std::sqrt(g.cov(j, j));
      const double rho = sd_clamp(g.cov(i, j) / (si * sj));
      const double dens = bvn_pdf(zi, zj, rho) / (si * sj);
      double tail = 1.0;
      if (k > 2) {
        std::vector<int> keep;
        for (int t = 0; t < k; ++t)
          if (t != i && t != j) keep.push_back(t);
        Vec val(2);
        val << y(i), y(j);
        const GaussianMoments cond = condition_on(g, keep, {i, j}, val);
        Vec sub(k - 2);
        for (size_t t = 0; t < keep.size(); ++t) sub(t) = y(keep[t]);
        tail = cdf(sub, cond, cfg).p;
      }
      H(i, j) = H(j, i) = dens * tail;
    }
  }
  // Diagonal from d/dy_i of m = -Sigma * grad (first-moment identity):
  // (y_i - mu_i) g_i = -sum_j Sigma_ij H_ij.
  for (int i = 0; i < k; ++i) {
    double acc = (y(i) - g.mean(i)) * grad(i);
    if (grad(i) == 0.0) { H(i, i) = 0.0; continue; }
    for (int j = 0; j < k; ++j)
      if (j != i) acc += g.cov(i, j) * H(i, j);
    H(i, i) = -acc / g.cov(i, i);
  }
  return H;
}

TruncatedMoments truncated_moments(const Vec& y, const GaussianMoments& g,
                                   const CdfConfig& cfg) {
  TruncatedMoments tm;
  tm.alpha = cdf(y, g, cfg).p;
  const Vec D = cdf_gradient(y, g, cfg);
  const Mat H = cdf_hessian(y, g, cfg);
  tm.m = -g.cov * D;
  tm.v = tm.alpha * g.cov + g.cov * H * g.cov;
  tm.v = 0.5 * (tm.v + tm.v.transpose());
  return tm;
}

Vec cdf_param_gradient(const TruncatedMoments& tm, const GaussianMoments& g,
                       const Mat& dmu, const Mat& dsigma) {
  const int k = g.dim();
  const int d = static_cast<int>(dmu.cols());
  if (dmu.rows() != k || dsigma.rows() != k * k || dsigma.cols() != d)
    throw NumericalError("derivative stack dimension mismatch");
  Eigen::LLT<Mat> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance not positive definite");
  const Mat Si = llt.solve(Mat::Identity(k, k));
  const Vec Sim = Si * tm.m;
  const Mat SivSi = Si * tm.v * Si;
  Vec out(d);
  for (int t = 0; t < d; ++t) {
    const Mat dS = Eigen::Map<const Mat>(dsigma.col(t).data(), k, k);
    const double trace1 = (Si * dS).trace();
    const double trace2 = (SivSi * dS).trace();
    out(t) = 0.5 * (-tm.alpha * trace1 + trace2) + dmu.col(t).dot(Sim);
  }
  return out;
}

Vec cdf_param_gradient(const Vec& y, const GaussianMoments& g, const Mat& dmu,
                       const Mat& dsigma, const CdfConfig& cfg) {
  return cdf_param_gradient(truncated_moments(y, g, cfg), g, dmu, dsigma);
}

}  // namespace mvn
}  // namespace latcens

#include "latcens/simulate.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "latcens/common.hpp"

namespace latcens {
namespace sim {

namespace {

using model::Mat;
using model::Vec;

constexpr double kTwoPi = 6.28318530717958647692528676655900577;

// Standard normals via Box-Muller on explicit 53-bit uniforms. We do not use
// std::normal_distribution because its draw sequence is implementation
// defined, and simulated datasets must be byte-identical everywhere.
class RowRng {
 public:
  explicit RowRng(std::uint64_t seed) : eng_(seed) {}

  double uniform() {  // in (0, 1)
    const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

 private:
  std::mt19937_64 eng_;
};

struct PreparedCensoring {
  int col = 0;
  dsl::VarKind kind = dsl::VarKind::CensoredRight;
  CensoringLaw law;
};

std::vector<PreparedCensoring> prepare_censoring(const model::ParameterMap& pm,
                                                 const SimOptions& opts) {
  const dsl::ModelSpec& spec = pm.spec;
  for (const auto& [name, law] : opts.censoring) {
    (void)law;
    if (!spec.is_manifest(name) || !spec.censorable(name) ||
        spec.kind_of(name) == dsl::VarKind::Binary)
      throw DataError("censoring law given for '" + name +
                      "', which is not a censored variable");
  }
  std::vector<PreparedCensoring> out;
  for (int j = 0; j < pm.p; ++j) {
    const std::string& name = spec.manifest[j];
    const dsl::VarKind k = spec.kind_of(name);
    if (k == dsl::VarKind::Continuous || k == dsl::VarKind::Binary) continue;
    auto it = opts.censoring.find(name);
    if (it == opts.censoring.end())
      throw DataError("censored variable '" + name +
                      "' needs a censoring law to simulate");
    const CensoringLaw& law = it->second;
    if (law.kind == CensoringLaw::Kind::NormalDraw) {
      if (k == dsl::VarKind::CensoredBoth)
        throw DataError("random censoring times for '" + name +
                        "' require a one-sided censoring kind");
      if (!(law.sd > 0.0) || !std::isfinite(law.sd) || !std::isfinite(law.mean))
        throw DataError("invalid random censoring time distribution for '" + name + "'");
    } else {
      const bool need_lower = k != dsl::VarKind::CensoredRight;
      const bool need_upper = k != dsl::VarKind::CensoredLeft;
      if (need_lower && !std::isfinite(law.lower))
        throw DataError("censored variable '" + name + "' needs a finite lower bound");
      if (need_upper && !std::isfinite(law.upper))
        throw DataError("censored variable '" + name + "' needs a finite upper bound");
      if (need_lower && need_upper && !(law.lower < law.upper))
        throw DataError("censoring bounds for '" + name + "' must satisfy lower < upper");
    }
    out.push_back({j, k, law});
  }
  return out;
}

}  // namespace

data::Dataset simulate(const model::ParameterMap& pm, const model::Vec& theta,
                       int n, std::uint64_t seed, const SimOptions& opts) {
  if (n < 0) throw DataError("negative sample size");
  if (theta.size() != pm.dim())
    throw DataError("parameter vector has length " + std::to_string(theta.size()) +
                    ", model has " + std::to_string(pm.dim()) + " free parameters");
  if (!theta.allFinite()) throw NumericalError("non-finite parameter value");

  const dsl::ModelSpec& spec = pm.spec;
  const int p = pm.p, l = pm.l, q = pm.q;
  const model::StructMatrices S = model::build_matrices(pm, theta);

  Eigen::LLT<Mat> llt_theta(S.Theta);
  if (p > 0 && llt_theta.info() != Eigen::Success)
    throw NumericalError("measurement residual covariance is not positive definite");
  Eigen::LLT<Mat> llt_psi(S.Psi);
  if (l > 0 && llt_psi.info() != Eigen::Success)
    throw NumericalError("latent residual covariance is not positive definite");
  const Mat Lth = p > 0 ? Mat(llt_theta.matrixL()) : Mat(0, 0);
  const Mat Lps = l > 0 ? Mat(llt_psi.matrixL()) : Mat(0, 0);

  const std::vector<PreparedCensoring> claws = prepare_censoring(pm, opts);

  const data::Dataset* cov_src = nullptr;
  std::vector<int> cov_cols;
  if (opts.covariates.kind == CovariateLaw::Kind::FromData) {
    cov_src = opts.covariates.source;
    if (!cov_src) throw DataError("covariate source dataset not provided");
    if (cov_src->n() < n)
      throw DataError("covariate source has " + std::to_string(cov_src->n()) +
                      " rows; " + std::to_string(n) + " requested");
    cov_cols.reserve(q);
    for (const std::string& cname : spec.covariates)
      cov_cols.push_back(cov_src->require_col(cname));
  }

  data::Dataset d;
  d.columns.reserve(p + q);
  for (const std::string& name : spec.manifest) d.columns.push_back(name);
  for (const std::string& name : spec.covariates) d.columns.push_back(name);
  d.values.resize(n, p + q);
  for (const PreparedCensoring& pc : claws)
    d.status[spec.manifest[pc.col]].assign(n, data::Status::Obs);

  Vec X(q), zeta(l), eps(p), ystar(p), eta(l);
  std::vector<double> ctimes(claws.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    RowRng rng(substream_seed(seed, static_cast<std::uint64_t>(i)));

    if (cov_src != nullptr) {
      for (int r = 0; r < q; ++r) {
        const double v = cov_src->values(i, cov_cols[r]);
        if (std::isnan(v))
          throw DataError("missing value for covariate '" + spec.covariates[r] +
                          "' at source row " + std::to_string(i + 1));
        X(r) = v;
      }
    } else {
      for (int r = 0; r < q; ++r) X(r) = rng.normal();
    }
    for (int r = 0; r < l; ++r) zeta(r) = rng.normal();
    for (int r = 0; r < p; ++r) eps(r) = rng.normal();
    for (std::size_t c = 0; c < claws.size(); ++c)
      if (claws[c].law.kind == CensoringLaw::Kind::NormalDraw)
        ctimes[c] = claws[c].law.mean + claws[c].law.sd * rng.normal();

    if (l > 0) {
      Mat Bi = S.Beta;
      for (std::size_t k = 0; k < pm.tau_slopes.size(); ++k) {
        const model::SlopeDesc& ts = pm.tau_slopes[k];
        Bi(ts.outcome, ts.latent) += S.tau(static_cast<int>(k)) * X(ts.moderator);
      }
      Eigen::FullPivLU<Mat> lu(Mat::Identity(l, l) - Bi);
      if (!lu.isInvertible())
        throw NumericalError("structural system (I - B) is singular at these parameter values");
      eta = lu.solve(S.alpha + S.Gamma * X + Lps * zeta);
    }

    Mat Li = S.Lambda;
    for (std::size_t k = 0; k < pm.delta_slopes.size(); ++k) {
      const model::SlopeDesc& ds = pm.delta_slopes[k];
      Li(ds.outcome, ds.latent) += S.delta(static_cast<int>(k)) * X(ds.moderator);
    }
    ystar = S.nu + Li * eta + S.Kappa * X + Lth * eps;

    for (int j = 0; j < p; ++j)
      if (spec.kind_of(spec.manifest[j]) == dsl::VarKind::Binary)
        ystar(j) = ystar(j) > 0.0 ? 1.0 : 0.0;
    for (std::size_t c = 0; c < claws.size(); ++c) {
      const PreparedCensoring& pc = claws[c];
      double lo = pc.law.lower, hi = pc.law.upper;
      if (pc.law.kind == CensoringLaw::Kind::NormalDraw) {
        if (pc.kind == dsl::VarKind::CensoredLeft)
          lo = ctimes[c];
        else
          hi = ctimes[c];
      }
      double& v = ystar(pc.col);
      auto& st = d.status[spec.manifest[pc.col]];
      if (pc.kind != dsl::VarKind::CensoredRight && v <= lo) {
        v = lo;
        st[i] = data::Status::Left;
      } else if (pc.kind != dsl::VarKind::CensoredLeft && v >= hi) {
        v = hi;
        st[i] = data::Status::Right;
      }
    }

    for (int j = 0; j < p; ++j) d.values(i, j) = ystar(j);
    for (int r = 0; r < q; ++r) d.values(i, p + r) = X(r);
  }
  return d;
}

data::Dataset dichotomize(const data::Dataset& d, const std::string& column, double cut) {
  data::Dataset out = d;
  const int c = out.require_col(column);
  if (out.has_status(column))
    throw DataError("cannot dichotomize '" + column + "': it carries censoring status");
  for (int i = 0; i < out.n(); ++i) {
    double& v = out.values(i, c);
    if (!std::isnan(v)) v = v > cut ? 1.0 : 0.0;
  }
  return out;
}

data::Dataset censor(const data::Dataset& d, const std::string& column, Side side,
                     double bound) {
  data::Dataset out = d;
  const int c = out.require_col(column);
  if (!std::isfinite(bound)) throw DataError("censoring bound must be finite");
  auto& st = out.status[column];
  if (st.empty()) st.assign(out.n(), data::Status::Obs);
  for (int i = 0; i < out.n(); ++i) {
    double& v = out.values(i, c);
    if (std::isnan(v) || st[i] != data::Status::Obs) continue;
    if (side == Side::Right ? v >= bound : v <= bound) {
      v = bound;
      st[i] = side == Side::Right ? data::Status::Right : data::Status::Left;
    }
  }
  return out;
}

}  // namespace sim
}  // namespace latcens

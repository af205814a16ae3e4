#include "latcens/moments.hpp"

#include <cmath>
#include <optional>

#include "latcens/common.hpp"
#include "latcens/dataset.hpp"

namespace latcens {
namespace model {

MomentSystem implied_moments(const ParameterMap& pm, const Vec& theta,
                             const Vec& covariates, bool with_derivs) {
  if (covariates.size() != pm.q)
    throw Error("covariate vector has length " + std::to_string(covariates.size()) +
                ", expected " + std::to_string(pm.q));
  const StructMatrices m = build_matrices(pm, theta);
  const int p = pm.p, l = pm.l, d = pm.dim();
  const Vec& X = covariates;

  // Individual-specific coefficient matrices: random slopes scale with their
  // moderator covariate.
  Mat Li = m.Lambda;
  for (size_t i = 0; i < pm.delta_slopes.size(); ++i) {
    const auto& s = pm.delta_slopes[i];
    Li(s.outcome, s.latent) += m.delta(static_cast<int>(i)) * X(s.moderator);
  }
  Mat Bi = m.Beta;
  for (size_t i = 0; i < pm.tau_slopes.size(); ++i) {
    const auto& s = pm.tau_slopes[i];
    Bi(s.outcome, s.latent) += m.tau(static_cast<int>(i)) * X(s.moderator);
  }

  Mat G;  // (I - Bi)^{-1}
  if (l > 0) {
    Eigen::FullPivLU<Mat> lu(Mat::Identity(l, l) - Bi);
    if (!lu.isInvertible())
      throw NumericalError("structural system (I - B) is singular at these parameter values");
    G = lu.inverse();
  } else {
    G.resize(0, 0);
  }

  const Vec a = m.alpha + m.Gamma * X;  // l
  const Vec u = G * a;                  // latent means
  const Mat F = Li * G;                 // p x l
  const Mat M = G * m.Psi * G.transpose();

  MomentSystem ms;
  ms.xi = m.nu + Li * u + m.Kappa * X;
  ms.omega = Li * M * Li.transpose() + m.Theta;
  ms.omega = ((ms.omega + ms.omega.transpose()) / 2).eval();
  if (!with_derivs || d == 0) {
    if (with_derivs) {
      ms.dxi.resize(p, 0);
      ms.domega.resize(p * p, 0);
    }
    return ms;
  }

  const Mat Hrows = M * Li.transpose();  // l x p; row k enters loading/path derivs
  ms.dxi = Mat::Zero(p, d);
  ms.domega = Mat::Zero(p * p, d);

  for (int t = 0; t < d; ++t) {
    const auto& pi = pm.params[t];
    const double chain = pi.log_scale ? std::exp(theta(t)) : 1.0;
    Eigen::Map<Mat> dO(ms.domega.col(t).data(), p, p);
    for (const Cell& cell : pi.cells) {
      double w = chain;
      int r = cell.r, c = cell.c;
      MatrixId mid = cell.m;
      if (mid == MatrixId::DeltaSlope) {
        const auto& s = pm.delta_slopes[r];
        w *= X(s.moderator);
        r = s.outcome;
        c = s.latent;
        mid = MatrixId::Lambda;
      } else if (mid == MatrixId::TauSlope) {
        const auto& s = pm.tau_slopes[r];
        w *= X(s.moderator);
        r = s.outcome;
        c = s.latent;
        mid = MatrixId::Beta;
      }
      switch (mid) {
        case MatrixId::Nu:
          ms.dxi(r, t) += w;
          break;
        case MatrixId::Alpha:
          ms.dxi.col(t) += w * F.col(r);
          break;
        case MatrixId::Kappa:
          ms.dxi(r, t) += w * X(c);
          break;
        case MatrixId::Gamma:
          ms.dxi.col(t) += w * X(c) * F.col(r);
          break;
        case MatrixId::Lambda:
          ms.dxi(r, t) += w * u(c);
          dO.row(r) += w * Hrows.row(c);
          dO.col(r) += w * Hrows.row(c).transpose();
          break;
        case MatrixId::Beta:
          ms.dxi.col(t) += w * u(c) * F.col(r);
          dO += w * (F.col(r) * Hrows.row(c) +
                     Hrows.row(c).transpose() * F.col(r).transpose());
          break;
        case MatrixId::Theta:
          dO(r, c) += w;
          break;
        case MatrixId::Psi:
          dO += w * (F.col(r) * F.col(c).transpose());
          break;
        default:
          break;
      }
    }
  }
  return ms;
}

namespace {

// Non-censored values of a manifest/covariate column; empty if absent.
std::vector<double> clean_column(const data::Dataset& d, const std::string& name) {
  std::vector<double> out;
  const int c = d.require_col(name);
  for (int r = 0; r < d.n(); ++r) {
    const double v = d.values(r, c);
    if (std::isnan(v)) continue;
    if (d.status_of(name, r) != data::Status::Obs) continue;
    out.push_back(v);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  if (v.size() < 2) return 1.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Pairwise least-squares slope of y on x over rows where both are clean.
std::optional<double> ls_slope(const data::Dataset& d, const std::string& yname,
                               const std::string& xname) {
  const int yc = d.require_col(yname);
  const int xc = d.require_col(xname);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int r = 0; r < d.n(); ++r) {
    const double y = d.values(r, yc), x = d.values(r, xc);
    if (std::isnan(y) || std::isnan(x)) continue;
    if (d.status_of(yname, r) != data::Status::Obs) continue;
    if (d.status_of(xname, r) != data::Status::Obs) continue;
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++n;
  }
  if (n < 3) return std::nullopt;
  const double den = sxx - sx * sx / n;
  if (den <= 0) return std::nullopt;
  return (sxy - sx * sy / n) / den;
}

}  // namespace

Vec starting_values(const ParameterMap& pm, const data::Dataset& d) {
  if (d.n() == 0) throw DataError("cannot compute starting values from an empty dataset");
  const auto& spec = pm.spec;

  // Reference indicator per latent: target of the first fixed loading.
  std::vector<std::string> ref(pm.l);
  for (const auto& f : pm.fixed) {
    if (f.cell.m != MatrixId::Lambda) continue;
    if (ref[f.cell.c].empty()) ref[f.cell.c] = spec.manifest[f.cell.r];
  }
  auto proxy = [&](const std::string& name) -> std::string {
    const int k = spec.latent_index(name);
    if (k < 0) return name;
    if (ref[k].empty()) return "";
    if (spec.kind_of(ref[k]) == dsl::VarKind::Binary) return "";
    return ref[k];
  };

  Vec natural(pm.dim());
  for (int t = 0; t < pm.dim(); ++t) {
    const auto& pi = pm.params[t];
    const Cell& cell = pi.cells.front();
    double v = 0.0;
    switch (pi.group) {
      case Group::Measurement:
        v = cell.m == MatrixId::Lambda ? 1.0 : 0.0;  // delta slopes start at 0
        break;
      case Group::Regression: {
        v = 0.0;
        if (cell.m == MatrixId::Kappa) {
          if (auto s = ls_slope(d, spec.manifest[cell.r], spec.covariates[cell.c]))
            v = *s;
        } else if (cell.m == MatrixId::Gamma) {
          const std::string y = proxy(spec.latent[cell.r]);
          if (!y.empty())
            if (auto s = ls_slope(d, y, spec.covariates[cell.c])) v = *s;
        } else if (cell.m == MatrixId::Beta) {
          const std::string y = proxy(spec.latent[cell.r]);
          const std::string x = proxy(spec.latent[cell.c]);
          if (!y.empty() && !x.empty())
            if (auto s = ls_slope(d, y, x)) v = *s;
        }
        break;
      }
      case Group::Intercept: {
        if (cell.m == MatrixId::Alpha) v = 0.0;
        else {
          const std::string& n = spec.manifest[cell.r];
          v = spec.kind_of(n) == dsl::VarKind::Binary ? 0.0
                                                      : mean_of(clean_column(d, n));
        }
        break;
      }
      case Group::Variance: {
        if (!pi.log_scale) { v = 0.0; break; }  // covariance
        if (cell.m == MatrixId::Psi) v = 1.0;
        else v = std::max(0.1, var_of(clean_column(d, spec.manifest[cell.r])));
        break;
      }
    }
    natural(t) = v;
  }
  return internal_from_natural(pm, natural);
}

}  // namespace model
}  // namespace latcens


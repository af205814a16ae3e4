#include "latcens/likelihood.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <string>

namespace latcens {
namespace lik {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kMinOrthant = 1e-300;

[[noreturn]] void rethrow_with_row(int row) {
  const std::string tag = "row " + std::to_string(row) + ": ";
  try {
    throw;
  } catch (const DegeneratePatternError& e) {
    throw DegeneratePatternError(tag + e.what());
  } catch (const DataError& e) {
    throw DataError(tag + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(tag + e.what());
  } catch (const Error& e) {
    throw Error(tag + e.what());
  }
}

Vec sub_vec(const Vec& v, const std::vector<int>& idx) {
  Vec out(static_cast<int>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out(static_cast<int>(i)) = v(idx[i]);
  return out;
}

Mat sub_mat(const Mat& M, const std::vector<int>& ri, const std::vector<int>& ci) {
  Mat out(static_cast<int>(ri.size()), static_cast<int>(ci.size()));
  for (size_t i = 0; i < ri.size(); ++i)
    for (size_t j = 0; j < ci.size(); ++j)
      out(static_cast<int>(i), static_cast<int>(j)) = M(ri[i], ci[j]);
  return out;
}

// Block of the vec'd derivative stack: d(omega)/d(theta_t) restricted to
// rows ri, cols ci. p is the full dimension behind the vec.
Mat sub_dom(const Mat& domega, int t, int p, const std::vector<int>& ri,
            const std::vector<int>& ci) {
  Mat out(static_cast<int>(ri.size()), static_cast<int>(ci.size()));
  for (size_t i = 0; i < ri.size(); ++i)
    for (size_t j = 0; j < ci.size(); ++j)
      out(static_cast<int>(i), static_cast<int>(j)) =
          domega(ri[i] + p * ci[j], t);
  return out;
}

Mat sub_rows(const Mat& M, const std::vector<int>& ri) {
  Mat out(static_cast<int>(ri.size()), M.cols());
  for (size_t i = 0; i < ri.size(); ++i) out.row(static_cast<int>(i)) = M.row(ri[i]);
  return out;
}

}  // namespace

ObservationPattern classify_pattern(const data::Dataset& d, int row,
                                    const dsl::ModelSpec& spec) {
  ObservationPattern pat;
  std::vector<double> y_obs, rb, lb;
  for (size_t j = 0; j < spec.manifest.size(); ++j) {
    const std::string& name = spec.manifest[j];
    const int col = d.require_col(name);
    const double v = d.values(row, col);
    const dsl::VarKind kind = spec.kind_of(name);
    const data::Status st = d.status_of(name, row);
    const int idx = static_cast<int>(j);

    if (kind == dsl::VarKind::Continuous) {
      if (st != data::Status::Obs)
        throw DataError("variable '" + name +
                        "' is declared continuous but carries a censoring status");
      if (std::isnan(v)) pat.missing.push_back(idx);
      else {
        pat.observed.push_back(idx);
        y_obs.push_back(v);
      }
      continue;
    }
    if (kind == dsl::VarKind::Binary) {
      if (std::isnan(v)) {
        pat.missing.push_back(idx);
        continue;
      }
      if (v == 1.0) {
        pat.right.push_back(idx);
        rb.push_back(0.0);
      } else if (v == 0.0) {
        pat.left.push_back(idx);
        lb.push_back(0.0);
      } else {
        throw DataError("binary variable '" + name + "' must be 0 or 1, got " +
                        std::to_string(v));
      }
      continue;
    }
    // censored kinds
    if (!d.has_status(name))
      throw DataError("censored variable '" + name + "' has no '" + name +
                      "_status' column");
    if (std::isnan(v)) {
      pat.missing.push_back(idx);
      continue;
    }
    switch (st) {
      case data::Status::Obs:
        pat.observed.push_back(idx);
        y_obs.push_back(v);
        break;
      case data::Status::Right:
        if (kind == dsl::VarKind::CensoredLeft)
          throw DataError("right-censoring status on left-censored variable '" +
                          name + "'");
        pat.right.push_back(idx);
        rb.push_back(v);
        break;
      case data::Status::Left:
        if (kind == dsl::VarKind::CensoredRight)
          throw DataError("left-censoring status on right-censored variable '" +
                          name + "'");
        pat.left.push_back(idx);
        lb.push_back(v);
        break;
    }
  }

  pat.cens = pat.right;
  pat.cens.insert(pat.cens.end(), pat.left.begin(), pat.left.end());
  const int k = static_cast<int>(pat.right.size());
  const int l = static_cast<int>(pat.left.size());
  pat.y_obs = Eigen::Map<const Vec>(y_obs.data(), static_cast<int>(y_obs.size()));
  pat.bounds.resize(k + l);
  pat.sign.resize(k + l);
  for (int i = 0; i < k; ++i) {
    pat.bounds(i) = rb[static_cast<size_t>(i)];
    pat.sign(i) = 1.0;
  }
  for (int i = 0; i < l; ++i) {
    pat.bounds(k + i) = lb[static_cast<size_t>(i)];
    pat.sign(k + i) = -1.0;
  }
  return pat;
}

ConditionalMoments conditional_moments(const model::MomentSystem& ms,
                                       const ObservationPattern& pat,
                                       bool with_derivs) {
  const int p = static_cast<int>(ms.xi.size());
  const int d = static_cast<int>(ms.dxi.cols());
  const auto& o = pat.observed;
  const auto& c = pat.cens;
  const int co = static_cast<int>(o.size());
  const int cc = static_cast<int>(c.size());

  ConditionalMoments out;
  if (co == 0) {
    out.mu = sub_vec(ms.xi, c);
    out.sigma = sub_mat(ms.omega, c, c);
    if (with_derivs) {
      out.dmu = sub_rows(ms.dxi, c);
      out.dsigma.resize(cc * cc, d);
      for (int t = 0; t < d; ++t) {
        const Mat DS = sub_dom(ms.domega, t, p, c, c);
        out.dsigma.col(t) = Eigen::Map<const Vec>(DS.data(), cc * cc);
      }
    }
    return out;
  }

  const Mat A = sub_mat(ms.omega, o, o);
  const Mat C = sub_mat(ms.omega, c, o);
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success)
    throw NumericalError("observed-block covariance is not positive definite");
  const Vec r = pat.y_obs - sub_vec(ms.xi, o);
  const Vec a = llt.solve(r);
  const Mat W = llt.solve(C.transpose()).transpose();  // C A^{-1}

  out.mu = sub_vec(ms.xi, c) + W * r;
  out.sigma = sub_mat(ms.omega, c, c) - W * C.transpose();
  out.sigma = ((out.sigma + out.sigma.transpose()) / 2).eval();

  if (with_derivs) {
    out.dmu.resize(cc, d);
    out.dsigma.resize(cc * cc, d);
    const Mat dxio_all = sub_rows(ms.dxi, o);
    const Mat dxic_all = sub_rows(ms.dxi, c);
    for (int t = 0; t < d; ++t) {
      const Mat DA = sub_dom(ms.domega, t, p, o, o);
      const Mat DC = sub_dom(ms.domega, t, p, c, o);
      const Mat DS = sub_dom(ms.domega, t, p, c, c);
      out.dmu.col(t) = dxic_all.col(t) + DC * a - W * (DA * a) - W * dxio_all.col(t);
      Mat dSig = DS - DC * W.transpose() - W * DC.transpose() +
                 W * DA * W.transpose();
      dSig = ((dSig + dSig.transpose()) / 2).eval();
      out.dsigma.col(t) = Eigen::Map<const Vec>(dSig.data(), cc * cc);
    }
  }
  return out;
}

Evaluator::Evaluator(const model::ParameterMap& pm, const data::Dataset& d,
                     EvalOptions opts)
    : pm_(pm), opts_(opts) {
  const auto& spec = pm.spec;
  std::vector<int> cov_cols;
  for (const auto& name : spec.covariates) cov_cols.push_back(d.require_col(name));

  std::map<std::string, int> seen;
  pats_.reserve(d.n());
  sys_of_row_.reserve(d.n());
  for (int row = 0; row < d.n(); ++row) {
    try {
      pats_.push_back(classify_pattern(d, row, spec));
      if (pats_.back().all_missing()) ++skipped_;

      Vec x(pm.q);
      for (int i = 0; i < pm.q; ++i) {
        x(i) = d.values(row, cov_cols[static_cast<size_t>(i)]);
        if (std::isnan(x(i)))
          throw DataError("missing value for covariate '" +
                          spec.covariates[static_cast<size_t>(i)] + "'");
      }
      std::string key(reinterpret_cast<const char*>(x.data()),
                      sizeof(double) * static_cast<size_t>(pm.q));
      auto [it, inserted] = seen.emplace(std::move(key),
                                         static_cast<int>(unique_covs_.size()));
      if (inserted) unique_covs_.push_back(x);
      sys_of_row_.push_back(it->second);
    } catch (...) {
      rethrow_with_row(row);
    }
  }
}

std::vector<model::MomentSystem> Evaluator::build_systems(const Vec& theta,
                                                          bool with_derivs) const {
  std::vector<model::MomentSystem> systems;
  systems.reserve(unique_covs_.size());
  for (const auto& x : unique_covs_) {
    systems.push_back(model::implied_moments(pm_, theta, x, with_derivs));
    mvn::GaussianMoments g{systems.back().xi, systems.back().omega};
    g.validate();
  }
  return systems;
}

Evaluator::RowEval Evaluator::eval_row(
    const Vec& theta, int row, bool want_score,
    const std::vector<model::MomentSystem>& systems) const {
  (void)theta;
  const int d = pm_.dim();
  const ObservationPattern& pat = pats_[static_cast<size_t>(row)];
  RowEval out;
  if (want_score) out.score = Vec::Zero(d);
  if (pat.all_missing()) return out;

  const model::MomentSystem& ms = systems[static_cast<size_t>(sys_of_row_[row])];
  const int p = pm_.p;
  const auto& o = pat.observed;
  const int co = static_cast<int>(o.size());
  const int cc = static_cast<int>(pat.cens.size());

  // Observed block: Gaussian log-density and its score.
  if (co > 0) {
    const Mat A = sub_mat(ms.omega, o, o);
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success)
      throw NumericalError("observed-block covariance is not positive definite");
    const Vec r = pat.y_obs - sub_vec(ms.xi, o);
    const Vec a = llt.solve(r);
    double logdet = 0.0;
    for (int i = 0; i < co; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    out.ll += -0.5 * (co * kLogTwoPi + logdet + r.dot(a));
    if (want_score) {
      const Mat Ainv = llt.solve(Mat::Identity(co, co));
      const Mat dxio_all = sub_rows(ms.dxi, o);
      for (int t = 0; t < d; ++t) {
        const Mat DA = sub_dom(ms.domega, t, p, o, o);
        out.score(t) += -0.5 * Ainv.cwiseProduct(DA).sum() +
                        0.5 * a.dot(DA * a) + dxio_all.col(t).dot(a);
      }
    }
  }

  if (cc == 0) return out;

  // Censored block: orthant probability of the conditional distribution,
  // folded to an upper rectangle by the sign transform U = -LZ.
  const ConditionalMoments cm = conditional_moments(ms, pat, want_score);
  const Vec& s = pat.sign;
  mvn::GaussianMoments g;
  g.mean = -s.cwiseProduct(cm.mu);
  g.cov = cm.sigma.cwiseProduct(s * s.transpose());
  const Vec u = -s.cwiseProduct(pat.bounds);

  if (!want_score) {
    const double prob = mvn::cdf(u, g, opts_.cdf).p;
    if (!(prob >= kMinOrthant))
      throw DegeneratePatternError(
          "orthant probability underflow (p < 1e-300) for the censored block");
    out.ll += std::log(prob);
    return out;
  }

  const mvn::TruncatedMoments tm = mvn::truncated_moments(u, g, opts_.cdf);
  if (!(tm.alpha >= kMinOrthant))
    throw DegeneratePatternError(
        "orthant probability underflow (p < 1e-300) for the censored block");
  out.ll += std::log(tm.alpha);

  Mat dmu_u(cc, d), dsigma_u(cc * cc, d);
  const Mat ss = s * s.transpose();
  for (int t = 0; t < d; ++t) {
    dmu_u.col(t) = -s.cwiseProduct(cm.dmu.col(t));
    const Mat dS = Eigen::Map<const Mat>(cm.dsigma.col(t).data(), cc, cc);
    const Mat dSu = dS.cwiseProduct(ss);
    dsigma_u.col(t) = Eigen::Map<const Vec>(dSu.data(), cc * cc);
  }
  out.score += mvn::cdf_param_gradient(tm, g, dmu_u, dsigma_u) / tm.alpha;
  return out;
}

double Evaluator::loglik(const Vec& theta) const {
  const auto systems = build_systems(theta, false);
  double total = 0.0;
  for (int row = 0; row < n(); ++row) {
    try {
      total += eval_row(theta, row, false, systems).ll;
    } catch (...) {
      rethrow_with_row(row);
    }
  }
  return total;
}

Vec Evaluator::score(const Vec& theta) const {
  const auto systems = build_systems(theta, true);
  Vec total = Vec::Zero(pm_.dim());
  for (int row = 0; row < n(); ++row) {
    try {
      total += eval_row(theta, row, true, systems).score;
    } catch (...) {
      rethrow_with_row(row);
    }
  }
  return total;
}

Mat Evaluator::score_matrix(const Vec& theta) const {
  const auto systems = build_systems(theta, true);
  Mat out(n(), pm_.dim());
  for (int row = 0; row < n(); ++row) {
    try {
      out.row(row) = eval_row(theta, row, true, systems).score.transpose();
    } catch (...) {
      rethrow_with_row(row);
    }
  }
  return out;
}

double Evaluator::loglik_and_scores(const Vec& theta, Mat& scores) const {
  const auto systems = build_systems(theta, true);
  scores.resize(n(), pm_.dim());
  double total = 0.0;
  for (int row = 0; row < n(); ++row) {
    try {
      const RowEval r = eval_row(theta, row, true, systems);
      total += r.ll;
      scores.row(row) = r.score.transpose();
    } catch (...) {
      rethrow_with_row(row);
    }
  }
  return total;
}

double Evaluator::loglik_row(const Vec& theta, int row) const {
  const auto systems = build_systems(theta, false);
  try {
    return eval_row(theta, row, false, systems).ll;
  } catch (...) {
    rethrow_with_row(row);
  }
}

Vec Evaluator::score_row(const Vec& theta, int row) const {
  const auto systems = build_systems(theta, true);
  try {
    return eval_row(theta, row, true, systems).score;
  } catch (...) {
    rethrow_with_row(row);
  }
}

namespace {

data::Dataset single_row(const data::Dataset& d, int row) {
  data::Dataset out;
  out.columns = d.columns;
  out.values = d.values.row(row);
  for (const auto& [name, st] : d.status)
    out.status[name] = {st[static_cast<size_t>(row)]};
  return out;
}

// Single-row views report "row 0"; restore the caller's row number.
template <class Fn>
auto renumber_row(int row, Fn&& fn) {
  auto fix = [row](const char* what) {
    std::string msg(what);
    const std::string from = "row 0: ";
    if (msg.compare(0, from.size(), from) == 0)
      msg = "row " + std::to_string(row) + ": " + msg.substr(from.size());
    return msg;
  };
  try {
    return fn();
  } catch (const DegeneratePatternError& e) {
    throw DegeneratePatternError(fix(e.what()));
  } catch (const DataError& e) {
    throw DataError(fix(e.what()));
  } catch (const NumericalError& e) {
    throw NumericalError(fix(e.what()));
  } catch (const Error& e) {
    throw Error(fix(e.what()));
  }
}

}  // namespace

double loglik_obs(const model::ParameterMap& pm, const Vec& theta,
                  const data::Dataset& d, int row, EvalOptions opts) {
  return renumber_row(row, [&] {
    return Evaluator(pm, single_row(d, row), opts).loglik(theta);
  });
}

Vec score_obs(const model::ParameterMap& pm, const Vec& theta,
              const data::Dataset& d, int row, EvalOptions opts) {
  return renumber_row(row, [&] {
    return Evaluator(pm, single_row(d, row), opts).score(theta);
  });
}

double loglik(const model::ParameterMap& pm, const Vec& theta,
              const data::Dataset& d, EvalOptions opts) {
  return Evaluator(pm, d, opts).loglik(theta);
}

Vec score(const model::ParameterMap& pm, const Vec& theta, const data::Dataset& d,
          EvalOptions opts) {
  return Evaluator(pm, d, opts).score(theta);
}

}  // namespace lik
}  // namespace latcens

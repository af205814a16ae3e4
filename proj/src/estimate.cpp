#include "latcens/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/special_functions/gamma.hpp>

#include "ascent.hpp"
#include "latcens/common.hpp"
#include "latcens/moments.hpp"

namespace latcens {
namespace est {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Ascent direction I^{-1} g, ridging the outer product towards a scaled
// identity until it is numerically positive definite and actually ascends.
Vec solve_direction(const Mat& info, const Vec& g) {
  const int d = static_cast<int>(info.rows());
  const double scale = std::max(info.trace() / d, 1e-12);
  double ridge = 0.0;
  for (int attempt = 0; attempt < 24; ++attempt) {
    Mat A = info;
    if (ridge > 0.0) A.diagonal().array() += ridge * scale;
    Eigen::LLT<Mat> llt(A);
    if (llt.info() == Eigen::Success) {
      Vec dir = llt.solve(g);
      if (dir.allFinite() && g.dot(dir) > 0.0) return dir;
    }
    ridge = ridge == 0.0 ? 1e-8 : ridge * 10.0;
  }
  return g / scale;  // essentially steepest ascent
}

}  // namespace

void append_note(std::string& note, const std::string& msg) {
  if (!note.empty()) note += "; ";
  note += msg;
}

AscentResult maximize_by_scores(const std::function<double(const Vec&)>& value,
                                const std::function<double(const Vec&, Mat&)>& value_and_scores,
                                Vec theta, int per_unit, const FitOptions& opts) {
  const int dim = static_cast<int>(theta.size());
  AscentResult out;

  Mat S;
  double ll;
  try {
    ll = value_and_scores(theta, S);
  } catch (const Error& e) {
    throw NumericalError(std::string("log-likelihood failed at the starting values: ") +
                         e.what());
  }
  if (!std::isfinite(ll))
    throw NumericalError("log-likelihood is not finite at the starting values");
  Vec g = S.colwise().sum().transpose();

  Mat H;
  if (opts.algorithm == Algorithm::Bfgs) H = Mat::Identity(dim, dim);

  int iter = 0;
  double last_rel_step = std::numeric_limits<double>::infinity();

  while (true) {
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    const double tol = opts.score_tol * std::max(1.0, std::abs(ll) / per_unit);
    if (gnorm < tol && last_rel_step < opts.step_tol) {
      out.converged = true;
      break;
    }

    Vec dir;
    if (opts.algorithm == Algorithm::Bhhh) {
      dir = solve_direction(S.transpose() * S, g);
    } else {
      dir = H * g;
      if (!dir.allFinite() || !(g.dot(dir) > 0.0)) {
        H = Mat::Identity(dim, dim);
        dir = g;
      }
    }

    const double gd = g.dot(dir);
    // Near the optimum the predicted gain g'dir/2 drops below the resolution
    // of a summed log-likelihood; without this allowance the exact Armijo test
    // rejects steps that demonstrably shrink the score.
    const double noise =
        32.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(ll));
    // With the score below tolerance and the full step's predicted gain inside
    // that same resolution, further iterations only bounce around the noise
    // basin (outer-product curvature keeps the step length well above step_tol
    // even when there is nothing left to gain), so stop here.
    if (gnorm < tol && gd <= noise) {
      out.converged = true;
      break;
    }
    if (iter >= opts.max_iterations) break;

    double step = 1.0;
    bool accepted = false;
    Vec theta_new;
    for (int h = 0; h <= opts.max_halvings; ++h, step *= 0.5) {
      theta_new = theta + step * dir;
      double ll_try;
      try {
        ll_try = value(theta_new);
      } catch (const NumericalError&) {
        continue;
      }
      if (std::isfinite(ll_try) && ll_try >= ll + opts.armijo_c * step * gd - noise) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (gnorm < tol) {
        out.converged = true;  // stationary within tolerance; nothing improvable
      } else {
        out.search_failed = true;
      }
      break;
    }

    last_rel_step =
        (step * dir).lpNorm<Eigen::Infinity>() / std::max(1.0, theta.lpNorm<Eigen::Infinity>());
    Mat S_new;
    const double ll_new = value_and_scores(theta_new, S_new);
    Vec g_new = S_new.colwise().sum().transpose();

    if (opts.algorithm == Algorithm::Bfgs) {
      const Vec s = step * dir;
      const Vec y = g - g_new;  // gradient change of -loglik
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm()) {
        const Vec Hy = H * y;
        H += ((sy + y.dot(Hy)) / (sy * sy)) * (s * s.transpose()) -
             (Hy * s.transpose() + s * Hy.transpose()) / sy;
      }
    }

    theta = theta_new;
    ll = ll_new;
    S = std::move(S_new);
    g = std::move(g_new);
    ++iter;
    if (opts.on_iteration) opts.on_iteration(iter, ll, g.lpNorm<Eigen::Infinity>());
  }

  out.theta = std::move(theta);
  out.scores = std::move(S);
  out.value = ll;
  out.iterations = iter;
  out.gradient_norm = g.lpNorm<Eigen::Infinity>();
  return out;
}

bool psd_inverse(const Mat& a, Mat& out) {
  const int d = static_cast<int>(a.rows());
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) return false;
  const Mat v = llt.solve(Mat::Identity(d, d));
  // Residual check guards against a Cholesky that went through numerically
  // on a singular matrix (aliased parameters).
  if (!v.allFinite() || (a * v - Mat::Identity(d, d)).cwiseAbs().maxCoeff() >= 1e-6)
    return false;
  out = 0.5 * (v + v.transpose());
  return true;
}

void fill_inference(FitResult& res, const model::ParameterMap& pm, bool have_vcov,
                    const Mat& vcov) {
  const int dim = pm.dim();
  res.vcov = have_vcov ? vcov : Mat::Constant(dim, dim, kNaN);
  res.se = have_vcov ? Vec(res.vcov.diagonal().cwiseMax(0.0).cwiseSqrt())
                     : Vec(Vec::Constant(dim, kNaN));
  res.estimate = model::natural_from_internal(pm, res.theta_hat);
  res.se_nat = res.se;
  res.z = Vec::Constant(dim, kNaN);
  res.p = Vec::Constant(dim, kNaN);
  for (int t = 0; t < dim; ++t) {
    if (pm.params[t].log_scale) res.se_nat(t) = res.se(t) * res.estimate(t);
    if (std::isfinite(res.se_nat(t)) && res.se_nat(t) > 0.0) {
      res.z(t) = res.estimate(t) / res.se_nat(t);
      if (!pm.params[t].log_scale) res.p(t) = 2.0 * mvn::norm_cdf(-std::abs(res.z(t)));
    }
  }
}

FitResult fit_mle(const model::ParameterMap& pm, const data::Dataset& d,
                  const FitOptions& opts) {
  const int dim = pm.dim();
  if (dim < 1) throw DataError("model has no free parameters");
  lik::Evaluator ev(pm, d, {opts.cdf});
  const int n_eff = ev.n() - ev.skipped_rows();
  if (n_eff < 1) throw DataError("no likelihood-contributing rows");

  Vec theta = opts.start ? *opts.start : model::starting_values(pm, d);
  if (theta.size() != dim)
    throw DataError("starting values have length " + std::to_string(theta.size()) +
                    ", model has " + std::to_string(dim) + " free parameters");

  const AscentResult a = maximize_by_scores(
      [&](const Vec& t) { return ev.loglik(t); },
      [&](const Vec& t, Mat& S) { return ev.loglik_and_scores(t, S); }, std::move(theta),
      n_eff, opts);

  FitResult res;
  res.names = pm.names();
  res.theta_hat = a.theta;
  res.loglik = a.value;
  res.iterations = a.iterations;
  res.converged = a.converged;
  res.gradient_norm = a.gradient_norm;
  res.n_rows = n_eff;
  if (a.search_failed) append_note(res.note, "line search could not improve the log-likelihood");

  Mat v;
  const bool se_ok = psd_inverse(a.scores.transpose() * a.scores, v);
  if (!se_ok)
    append_note(res.note,
                "information matrix is singular; standard errors unavailable "
                "(the model may not be identified)");
  fill_inference(res, pm, se_ok, v);
  return res;
}

Mat information(const model::ParameterMap& pm, const Vec& theta,
                const data::Dataset& d, const lik::EvalOptions& opts) {
  lik::Evaluator ev(pm, d, opts);
  const Mat S = ev.score_matrix(theta);
  return S.transpose() * S;
}

LrResult lr_test(const FitResult& restricted, const FitResult& full) {
  const std::set<std::string> full_names(full.names.begin(), full.names.end());
  for (const std::string& nm : restricted.names)
    if (full_names.count(nm) == 0)
      throw DataError("models are not nested: '" + nm +
                      "' is not a parameter of the full model");
  LrResult out;
  out.df = static_cast<int>(full.names.size()) - static_cast<int>(restricted.names.size());
  const double stat = 2.0 * (full.loglik - restricted.loglik);
  if (stat < -1e-8)
    throw NumericalError(
        "full-model log-likelihood is below the restricted model's; refit before testing");
  out.stat = std::max(0.0, stat);
  if (out.df == 0)
    out.p = out.stat <= 0.0 ? 1.0 : 0.0;
  else
    out.p = boost::math::gamma_q(0.5 * out.df, 0.5 * out.stat);
  return out;
}

double conditional_probability(const FitResult& fit, const model::ParameterMap& pm,
                               const std::string& item, const Vec& eta,
                               const Vec& covariates) {
  const int j = pm.spec.manifest_index(item);
  if (j < 0) throw DataError("unknown variable '" + item + "'");
  if (pm.spec.kind_of(item) != dsl::VarKind::Binary)
    throw DataError("'" + item + "' is not a binary variable");
  if (eta.size() != pm.l) throw DataError("latent value vector has wrong length");
  Vec x = covariates;
  if (x.size() == 0 && pm.q > 0) x = Vec::Zero(pm.q);
  if (x.size() != pm.q) throw DataError("covariate vector has wrong length");
  if (fit.theta_hat.size() != pm.dim())
    throw DataError("fit result does not match the model");

  const model::StructMatrices S = model::build_matrices(pm, fit.theta_hat);
  double lp = S.nu(j);
  if (pm.l > 0) lp += S.Lambda.row(j).dot(eta);
  if (pm.q > 0) lp += S.Kappa.row(j).dot(x);
  for (std::size_t k = 0; k < pm.delta_slopes.size(); ++k) {
    const model::SlopeDesc& ds = pm.delta_slopes[k];
    if (ds.outcome == j) lp += S.delta(static_cast<int>(k)) * x(ds.moderator) * eta(ds.latent);
  }
  return mvn::norm_cdf(lp);
}

}  // namespace est
}  // namespace latcens

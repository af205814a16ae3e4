#include "latcens/study.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "latcens/common.hpp"

namespace latcens {
namespace study {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RepOutcome {
  std::optional<std::pair<Vec, Vec>> fit;  // natural estimates, natural SEs
  std::string error;
};

std::string fmt(const char* spec, double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

StudyResult run_study(const model::ParameterMap& sim_pm, const Vec& truth_sim,
                      const model::ParameterMap& fit_pm, const Vec& truth_fit,
                      const StudyOptions& opts) {
  if (opts.reps < 1) throw DataError("a study needs at least one replication");
  if (opts.n < 1) throw DataError("a study needs a positive sample size");
  if (truth_sim.size() != sim_pm.dim())
    throw DataError("simulation truth has the wrong length");
  if (truth_fit.size() != fit_pm.dim())
    throw DataError("fit-model truth has the wrong length");

  const Vec theta_sim = model::internal_from_natural(sim_pm, truth_sim);
  const int d = fit_pm.dim();

  std::vector<RepOutcome> reps(static_cast<size_t>(opts.reps));
  auto run_rep = [&](int r) {
    RepOutcome& out = reps[static_cast<size_t>(r)];
    try {
      auto dset = sim::simulate(sim_pm, theta_sim, opts.n,
                                substream_seed(opts.seed, static_cast<std::uint64_t>(r)),
                                opts.sim);
      if (opts.transform) dset = opts.transform(std::move(dset));
      const est::FitResult fit = opts.fitter
                                     ? opts.fitter(fit_pm, dset, opts.fit)
                                     : est::fit_mle(fit_pm, dset, opts.fit);
      if (!fit.converged)
        out.error = "replication did not converge";
      else if (!fit.se_nat.allFinite())
        out.error = "replication produced non-finite standard errors";
      else
        out.fit = {fit.estimate, fit.se_nat};
    } catch (const Error& e) {
      out.error = e.what();
    }
  };

  const int nthreads = std::max(1, opts.threads);
  if (nthreads == 1 || opts.reps == 1) {
    for (int r = 0; r < opts.reps; ++r) run_rep(r);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nthreads));
    for (int w = 0; w < nthreads; ++w)
      pool.emplace_back([&, w] {
        for (int r = w; r < opts.reps; r += nthreads) run_rep(r);
      });
    for (auto& t : pool) t.join();
  }

  StudyResult res;
  res.reps = opts.reps;
  res.n = opts.n;
  res.seed = opts.seed;
  for (const auto& rep : reps) {
    if (rep.fit)
      ++res.used;
    else {
      ++res.failed;
      if (res.note.empty()) res.note = rep.error;
    }
  }
  if (res.used < 1) throw NumericalError("every replication failed: " + res.note);

  res.params.resize(static_cast<size_t>(d));
  for (int t = 0; t < d; ++t) {
    ParamSummary& ps = res.params[static_cast<size_t>(t)];
    ps.name = fit_pm.params[static_cast<size_t>(t)].name;
    ps.truth = truth_fit(t);
    double sum = 0, sum_se = 0, sum_sq_truth = 0;
    for (const auto& rep : reps)
      if (rep.fit) {
        const double x = rep.fit->first(t);
        sum += x;
        sum_se += rep.fit->second(t);
        sum_sq_truth += (x - ps.truth) * (x - ps.truth);
      }
    ps.mean = sum / res.used;
    ps.bias = ps.mean - ps.truth;
    ps.mse = sum_sq_truth / res.used;
    ps.ave_se = sum_se / res.used;
    if (res.used > 1) {
      double ss = 0;
      for (const auto& rep : reps)
        if (rep.fit) {
          const double c = rep.fit->first(t) - ps.mean;
          ss += c * c;
        }
      ps.variance = ss / (res.used - 1);
      ps.sd = std::sqrt(ps.variance);
      ps.se_ratio = ps.sd > 0.0 ? ps.ave_se / ps.sd : kNaN;
    } else {
      ps.variance = kNaN;
      ps.sd = kNaN;
      ps.se_ratio = kNaN;
    }
  }
  return res;
}

void print_study(std::ostream& out, const StudyResult& s) {
  out << "Replications: " << s.reps << " (" << s.used << " used, " << s.failed
      << " failed), n = " << s.n << ", seed = " << s.seed << "\n\n";

  size_t name_w = 9;
  for (const auto& p : s.params) name_w = std::max(name_w, p.name.size());
  auto pad = [](std::string v, size_t w) {
    while (v.size() < w) v.insert(v.begin(), ' ');
    return v;
  };

  std::string head = "Parameter";
  head.resize(name_w, ' ');
  out << head << pad("Truth", 9) << pad("Mean", 10) << pad("Variance", 10)
      << pad("Bias", 9) << pad("MSE", 10) << pad("Ave(SE)", 10) << pad("SD", 9)
      << pad("Ave(SE)/SD", 12) << "\n";
  for (const auto& p : s.params) {
    std::string nm = p.name;
    nm.resize(name_w, ' ');
    out << nm << pad(fmt("%.3f", p.truth), 9) << pad(fmt("%.4f", p.mean), 10)
        << pad(fmt("%.4f", p.variance), 10) << pad(fmt("%.3f", p.bias), 9)
        << pad(fmt("%.4f", p.mse), 10) << pad(fmt("%.4f", p.ave_se), 10)
        << pad(fmt("%.4f", p.sd), 9) << pad(fmt("%.2f", p.se_ratio), 12) << "\n";
  }
}

std::string study_json(const StudyResult& s) {
  auto fon = [](double v) -> nlohmann::ordered_json {
    if (!std::isfinite(v)) return nullptr;
    return v;
  };
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["command"] = "study";
  j["reps"] = s.reps;
  j["used"] = s.used;
  j["failed"] = s.failed;
  j["n"] = s.n;
  j["seed"] = s.seed;
  j["note"] = s.note;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& p : s.params) {
    nlohmann::ordered_json row;
    row["name"] = p.name;
    row["truth"] = fon(p.truth);
    row["mean"] = fon(p.mean);
    row["bias"] = fon(p.bias);
    row["variance"] = fon(p.variance);
    row["mse"] = fon(p.mse);
    row["ave_se"] = fon(p.ave_se);
    row["sd"] = fon(p.sd);
    row["se_ratio"] = fon(p.se_ratio);
    rows.push_back(std::move(row));
  }
  j["parameters"] = std::move(rows);
  return j.dump(2) + "\n";
}

}  // namespace study
}  // namespace latcens

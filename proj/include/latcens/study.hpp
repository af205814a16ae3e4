#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "latcens/estimate.hpp"
#include "latcens/simulate.hpp"

namespace latcens {
namespace study {

using model::Mat;
using model::Vec;

struct StudyOptions {
  int reps = 200;
  int n = 500;
  std::uint64_t seed = 0;
  int threads = 1;  // replication seeds are counter-derived, so results do not
                    // depend on this
  sim::SimOptions sim;
  est::FitOptions fit;
  // Optional dataset transform between simulation and fitting (dichotomize,
  // post-hoc censoring, ...).
  std::function<data::Dataset(data::Dataset)> transform;
  // Fit routine; fit_mle when empty.
  std::function<est::FitResult(const model::ParameterMap&, const data::Dataset&,
                               const est::FitOptions&)>
      fitter;
};

// Natural-scale Monte Carlo summaries for one parameter.
struct ParamSummary {
  std::string name;
  double truth = 0;
  double mean = 0;
  double bias = 0;
  double variance = 0;  // across replications
  double mse = 0;       // around the truth
  double ave_se = 0;    // mean reported standard error
  double sd = 0;        // sqrt(variance); NaN with fewer than 2 usable reps
  double se_ratio = 0;  // ave_se / sd
};

struct StudyResult {
  std::vector<ParamSummary> params;
  int reps = 0;    // requested
  int used = 0;    // replications entering the summaries
  int failed = 0;  // non-converged, errored, or without finite standard errors
  int n = 0;
  std::uint64_t seed = 0;
  std::string note;  // first failure message, when any replication failed
};

// reps replications of simulate(sim_pm, truth_sim) -> transform -> fit on
// fit_pm, summarized against truth_fit. Both truth vectors are natural scale.
StudyResult run_study(const model::ParameterMap& sim_pm, const Vec& truth_sim,
                      const model::ParameterMap& fit_pm, const Vec& truth_fit,
                      const StudyOptions& opts);

// Replication summary table with the Variance / Bias / MSE / Ave(SE)/SD
// columns of the reference design.
void print_study(std::ostream& out, const StudyResult& s);

std::string study_json(const StudyResult& s);

}  // namespace study
}  // namespace latcens

#pragma once

#include <vector>

#include "latcens/dataset.hpp"
#include "latcens/moments.hpp"
#include "latcens/mvn.hpp"

namespace latcens {
namespace lik {

using model::Mat;
using model::Vec;

// Partition of one data row: observed values, censoring bounds with their
// directions (right-censored coordinates stacked before left-censored ones,
// binary 1/0 mapping to right/left at bound 0), and missing components.
struct ObservationPattern {
  std::vector<int> observed;  // manifest indices, ascending
  std::vector<int> right;
  std::vector<int> left;
  std::vector<int> missing;
  std::vector<int> cens;      // right then left
  Vec y_obs;                  // aligned with observed
  Vec bounds;                 // aligned with cens
  Vec sign;                   // aligned with cens: +1 right, -1 left

  bool all_missing() const { return observed.empty() && cens.empty(); }
};

ObservationPattern classify_pattern(const data::Dataset& d, int row,
                                    const dsl::ModelSpec& spec);

// Moments of the censored block given the observed block, with derivative
// stacks when the source MomentSystem carries them.
struct ConditionalMoments {
  Vec mu;
  Mat sigma;
  Mat dmu;     // c x d
  Mat dsigma;  // c^2 x d
};

ConditionalMoments conditional_moments(const model::MomentSystem& ms,
                                       const ObservationPattern& pat,
                                       bool with_derivs = false);

struct EvalOptions {
  mvn::CdfConfig cdf{};
};

// Re-usable evaluator: classifies patterns and groups identical covariate
// configurations once per dataset, then evaluates at many theta.
class Evaluator {
 public:
  Evaluator(const model::ParameterMap& pm, const data::Dataset& d,
            EvalOptions opts = {});

  double loglik(const Vec& theta) const;
  Vec score(const Vec& theta) const;
  Mat score_matrix(const Vec& theta) const;  // n x d, zero rows where skipped
  // Total log-likelihood plus the per-row score matrix in one sweep.
  double loglik_and_scores(const Vec& theta, Mat& scores) const;

  double loglik_row(const Vec& theta, int row) const;
  Vec score_row(const Vec& theta, int row) const;

  int n() const { return static_cast<int>(pats_.size()); }
  int skipped_rows() const { return skipped_; }  // entirely-missing rows

 private:
  struct RowEval {
    double ll = 0.0;
    Vec score;
  };
  RowEval eval_row(const Vec& theta, int row, bool want_score,
                   const std::vector<model::MomentSystem>& systems) const;
  std::vector<model::MomentSystem> build_systems(const Vec& theta,
                                                 bool with_derivs) const;

  const model::ParameterMap& pm_;
  EvalOptions opts_;
  std::vector<ObservationPattern> pats_;
  std::vector<int> sys_of_row_;       // row -> covariate-pattern index
  std::vector<Vec> unique_covs_;
  int skipped_ = 0;
};

// One-shot conveniences matching the operation signatures.
double loglik_obs(const model::ParameterMap& pm, const Vec& theta,
                  const data::Dataset& d, int row, EvalOptions opts = {});
Vec score_obs(const model::ParameterMap& pm, const Vec& theta,
              const data::Dataset& d, int row, EvalOptions opts = {});
double loglik(const model::ParameterMap& pm, const Vec& theta,
              const data::Dataset& d, EvalOptions opts = {});
Vec score(const model::ParameterMap& pm, const Vec& theta,
          const data::Dataset& d, EvalOptions opts = {});

}  // namespace lik
}  // namespace latcens

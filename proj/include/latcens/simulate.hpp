#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "latcens/dataset.hpp"
#include "latcens/param_map.hpp"

namespace latcens {
namespace sim {

// Where covariate rows come from: independent standard normals (default) or
// the leading rows of an existing dataset (conditional simulation).
struct CovariateLaw {
  enum class Kind { StandardNormal, FromData };
  Kind kind = Kind::StandardNormal;
  const data::Dataset* source = nullptr;  // borrowed; must outlive the call

  static CovariateLaw standard_normal() { return {}; }
  static CovariateLaw from_data(const data::Dataset& d) {
    CovariateLaw law;
    law.kind = Kind::FromData;
    law.source = &d;
    return law;
  }
};

// Censoring mechanism for one declared-censored variable. Fixed clips at the
// given bound(s); NormalDraw draws a fresh censoring time per row and is
// available for one-sided kinds only.
struct CensoringLaw {
  enum class Kind { Fixed, NormalDraw };
  Kind kind = Kind::Fixed;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double mean = 0.0, sd = 1.0;  // NormalDraw

  static CensoringLaw fixed_left(double bound) {
    CensoringLaw c;
    c.lower = bound;
    return c;
  }
  static CensoringLaw fixed_right(double bound) {
    CensoringLaw c;
    c.upper = bound;
    return c;
  }
  static CensoringLaw fixed_both(double lo, double hi) {
    CensoringLaw c;
    c.lower = lo;
    c.upper = hi;
    return c;
  }
  static CensoringLaw normal_draw(double mean, double sd) {
    CensoringLaw c;
    c.kind = Kind::NormalDraw;
    c.mean = mean;
    c.sd = sd;
    return c;
  }
};

struct SimOptions {
  CovariateLaw covariates{};
  // Keyed by variable name; required for every declared-censored variable.
  std::map<std::string, CensoringLaw> censoring{};
};

// Draws n rows from the model at theta (internal scale): covariates, then
// structural residuals, then measurement residuals, then censoring times, all
// from a per-row RNG substream. Row i is therefore byte-identical across runs
// and independent of n. Binary variables are thresholded at zero; censored
// variables are clipped per their CensoringLaw with status flags set.
data::Dataset simulate(const model::ParameterMap& pm, const model::Vec& theta,
                       int n, std::uint64_t seed, const SimOptions& opts = {});

enum class Side { Left, Right };

// Observation transforms mirroring the usual data-preparation pipeline.
// dichotomize replaces values by 1{value > cut}; censor clips at the bound
// (>= for right, <= for left), records the status, and leaves already-censored
// entries untouched, so re-applying the same bound is a no-op.
data::Dataset dichotomize(const data::Dataset& d, const std::string& column, double cut);
data::Dataset censor(const data::Dataset& d, const std::string& column, Side side,
                     double bound);

}  // namespace sim
}  // namespace latcens

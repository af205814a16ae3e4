#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "latcens/dsl.hpp"

namespace latcens {
namespace model {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class MatrixId {
  Nu,      // manifest intercepts (p)
  Alpha,   // latent intercepts (l)
  Lambda,  // loadings (p x l)
  Kappa,   // manifest-on-covariate regressions (p x q)
  Beta,    // latent adjacency (l x l)
  Gamma,   // latent-on-covariate regressions (l x q)
  Theta,   // measurement residual covariance (p x p)
  Psi,     // structural residual covariance (l x l)
  DeltaSlope,  // row = index into delta slope list
  TauSlope,    // row = index into tau slope list
};

struct Cell {
  MatrixId m;
  int r = 0, c = 0;
};

// Printout grouping; also fixes the parameter ordering.
enum class Group { Measurement, Regression, Intercept, Variance };

struct ParamInfo {
  std::string name;
  Group group;
  bool log_scale = false;  // optimized as log(value)
  std::vector<Cell> cells;
};

struct FixedCell {
  Cell cell;
  double value = 0.0;
};

// Random-slope descriptor: coefficient enters Lambda(outcome, latent) or
// Beta(outcome, latent) multiplied by the moderator covariate.
struct SlopeDesc {
  int outcome = 0;    // manifest index (delta) or latent index (tau)
  int latent = 0;
  int moderator = 0;  // covariate index
};

struct ParameterMap {
  dsl::ModelSpec spec;
  int p = 0, l = 0, q = 0;
  std::vector<ParamInfo> params;
  std::vector<FixedCell> fixed;
  std::vector<SlopeDesc> delta_slopes;
  std::vector<SlopeDesc> tau_slopes;

  int dim() const { return static_cast<int>(params.size()); }
  std::vector<std::string> names() const;
  int index_of(const std::string& name) const;  // -1 if absent
};

// Deterministic parameter ordering: measurements, regressions, intercepts,
// variances. Applies the reference-indicator convention per latent variable
// (first loading fixed to 1 when none is, reference intercept fixed to 0
// unless overridden) and fixes binary residual variances at 1.
ParameterMap compile(const dsl::ModelSpec& spec);

struct StructMatrices {
  Vec nu, alpha;
  Mat Lambda, Kappa, Beta, Gamma, Theta, Psi;
  Vec delta, tau;  // slope coefficients, aligned with the descriptor lists
};

// Places fixed cells and theta (internal scale: log for variances) into the
// structural matrices.
StructMatrices build_matrices(const ParameterMap& pm, const Vec& theta);

// Natural <-> internal parameter scales (log transform on variance cells).
Vec internal_from_natural(const ParameterMap& pm, const Vec& natural);
Vec natural_from_internal(const ParameterMap& pm, const Vec& internal);

// Intercepts 0, covariances 0, everything else 1 (natural scale).
Vec default_true_values(const ParameterMap& pm);

}  // namespace model
}  // namespace latcens

#pragma once

#include <map>
#include <string>
#include <vector>

#include "latcens/common.hpp"

namespace latcens {
namespace dsl {

enum class VarKind { Continuous, Binary, CensoredLeft, CensoredRight, CensoredBoth };

// Trailing @-tag of a statement: nothing (free), @0.5 (fixed), @name (label).
struct Tag {
  enum class Kind { Free, Fixed, Label };
  Kind kind = Kind::Free;
  double value = 0.0;
  std::string label;
};

struct Edge {
  std::string to, from;
  Tag tag;
  int line = 0;
};

struct Slope {
  std::string outcome, latent, moderator;
  Tag tag;
  int line = 0;
};

struct Cov {
  std::string a, b;
  Tag tag;
  int line = 0;
};

struct Intercept {
  std::string name;
  Tag tag;
  int line = 0;
};

struct ModelSpec {
  std::vector<std::string> manifest;    // appearance order
  std::vector<std::string> latent;      // declaration order
  std::vector<std::string> covariates;  // appearance order
  std::map<std::string, VarKind> kind;  // manifest variables only

  std::vector<Edge> loadings;       // manifest <- latent
  std::vector<Edge> mregressions;   // manifest <- covariate
  std::vector<Edge> lregressions;   // latent <- latent
  std::vector<Edge> lcovariates;    // latent <- covariate
  std::vector<Slope> delta_slopes;  // manifest outcome, latent x covariate
  std::vector<Slope> tau_slopes;    // latent outcome, latent x covariate
  std::vector<Cov> covs;            // cov(a,b); cov(a,a) constrains a variance
  std::vector<Intercept> intercepts;

  bool is_manifest(const std::string& n) const;
  bool is_latent(const std::string& n) const;
  bool is_covariate(const std::string& n) const;
  int manifest_index(const std::string& n) const;  // -1 if absent
  int latent_index(const std::string& n) const;
  int covariate_index(const std::string& n) const;
  VarKind kind_of(const std::string& manifest_name) const;
  bool censorable(const std::string& manifest_name) const;
};

// Parses the model language. One statement per line, `#` starts a comment:
//   latent <name>...
//   binary <name>...
//   censored <left|right|both> <name>...
//   <to> <- <from> [@<number> | @<label>]
//   cov(<a>,<b>) [@<number> | @<label>]
//   slope <outcome> <- <latent> * <covariate> [@...]
//   intercept <name> [@...]
// Unknown right-hand-side identifiers become covariates.
ModelSpec parse_model(const std::string& text);

}  // namespace dsl
}  // namespace latcens

#include "latcens/param_map.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace latcens {
namespace model {

using dsl::Tag;

std::vector<std::string> ParameterMap::names() const {
  std::vector<std::string> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.name);
  return out;
}

int ParameterMap::index_of(const std::string& name) const {
  for (size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

struct Builder {
  ParameterMap& pm;
  std::map<std::string, int> by_label;

  void add_fixed(Cell cell, double value) { pm.fixed.push_back({cell, value}); }

  // Returns the index of the parameter the cell was attached to.
  int add_free(const std::string& name, Group group, bool log_scale, Cell cell,
               const Tag& tag) {
    if (tag.kind == Tag::Kind::Label) {
      auto it = by_label.find(tag.label);
      if (it != by_label.end()) {
        ParamInfo& pi = pm.params[it->second];
        if (pi.log_scale != log_scale)
          throw Error("label '" + tag.label + "' ties incompatible parameter kinds");
        pi.cells.push_back(cell);
        return it->second;
      }
      by_label[tag.label] = static_cast<int>(pm.params.size());
      pm.params.push_back({tag.label, group, log_scale, {cell}});
      return static_cast<int>(pm.params.size()) - 1;
    }
    pm.params.push_back({name, group, log_scale, {cell}});
    return static_cast<int>(pm.params.size()) - 1;
  }

  void add(const std::string& name, Group group, bool log_scale, Cell cell,
           const Tag& tag) {
    if (tag.kind == Tag::Kind::Fixed) add_fixed(cell, tag.value);
    else add_free(name, group, log_scale, cell, tag);
  }
};

}  // namespace

ParameterMap compile(const dsl::ModelSpec& spec) {
  ParameterMap pm;
  pm.spec = spec;
  pm.p = static_cast<int>(spec.manifest.size());
  pm.l = static_cast<int>(spec.latent.size());
  pm.q = static_cast<int>(spec.covariates.size());
  for (const auto& s : spec.delta_slopes)
    pm.delta_slopes.push_back({spec.manifest_index(s.outcome),
                               spec.latent_index(s.latent),
                               spec.covariate_index(s.moderator)});
  for (const auto& s : spec.tau_slopes)
    pm.tau_slopes.push_back({spec.latent_index(s.outcome),
                             spec.latent_index(s.latent),
                             spec.covariate_index(s.moderator)});

  Builder b{pm, {}};

  // Reference-indicator convention: per latent variable, fix the first free
  // loading to 1 when none is fixed explicitly; the reference indicator's
  // intercept is pinned at 0 unless an intercept statement overrides it.
  std::set<const dsl::Edge*> auto_fixed;
  std::set<int> reference;
  for (int k = 0; k < pm.l; ++k) {
    const std::string& lname = spec.latent[k];
    const dsl::Edge* first_free = nullptr;
    const dsl::Edge* first_fixed = nullptr;
    for (const auto& e : spec.loadings) {
      if (e.from != lname) continue;
      if (e.tag.kind == Tag::Kind::Fixed && !first_fixed) first_fixed = &e;
      if (e.tag.kind == Tag::Kind::Free && !first_free) first_free = &e;
    }
    if (!first_fixed && first_free) {
      auto_fixed.insert(first_free);
      first_fixed = first_free;
    }
    if (first_fixed) reference.insert(spec.manifest_index(first_fixed->to));
  }
  std::set<std::string> intercept_override;
  for (const auto& ic : spec.intercepts) intercept_override.insert(ic.name);

  // Measurements: loadings, then random-slope deltas.
  for (const auto& e : spec.loadings) {
    Cell cell{MatrixId::Lambda, spec.manifest_index(e.to), spec.latent_index(e.from)};
    if (auto_fixed.count(&e)) b.add_fixed(cell, 1.0);
    else b.add(e.to + "<-" + e.from, Group::Measurement, false, cell, e.tag);
  }
  for (size_t i = 0; i < spec.delta_slopes.size(); ++i) {
    const auto& s = spec.delta_slopes[i];
    b.add(s.outcome + "<-" + s.latent + "*" + s.moderator, Group::Measurement, false,
          {MatrixId::DeltaSlope, static_cast<int>(i), 0}, s.tag);
  }

  // Regressions in declaration order across the three edge classes plus taus.
  {
    struct Item {
      int line;
      int type;  // 0 lreg, 1 lcov, 2 mreg, 3 tau
      size_t idx;
    };
    std::vector<Item> items;
    for (size_t i = 0; i < spec.lregressions.size(); ++i)
      items.push_back({spec.lregressions[i].line, 0, i});
    for (size_t i = 0; i < spec.lcovariates.size(); ++i)
      items.push_back({spec.lcovariates[i].line, 1, i});
    for (size_t i = 0; i < spec.mregressions.size(); ++i)
      items.push_back({spec.mregressions[i].line, 2, i});
    for (size_t i = 0; i < spec.tau_slopes.size(); ++i)
      items.push_back({spec.tau_slopes[i].line, 3, i});
    std::stable_sort(items.begin(), items.end(),
                     [](const Item& a, const Item& c) { return a.line < c.line; });
    for (const auto& it : items) {
      if (it.type == 3) {
        const auto& s = spec.tau_slopes[it.idx];
        b.add(s.outcome + "<-" + s.latent + "*" + s.moderator, Group::Regression,
              false, {MatrixId::TauSlope, static_cast<int>(it.idx), 0}, s.tag);
        continue;
      }
      const auto& e = it.type == 0 ? spec.lregressions[it.idx]
                    : it.type == 1 ? spec.lcovariates[it.idx]
                                   : spec.mregressions[it.idx];
      Cell cell;
      if (it.type == 0)
        cell = {MatrixId::Beta, spec.latent_index(e.to), spec.latent_index(e.from)};
      else if (it.type == 1)
        cell = {MatrixId::Gamma, spec.latent_index(e.to), spec.covariate_index(e.from)};
      else
        cell = {MatrixId::Kappa, spec.manifest_index(e.to), spec.covariate_index(e.from)};
      b.add(e.to + "<-" + e.from, Group::Regression, false, cell, e.tag);
    }
  }

  // Intercepts: manifest variables then latent variables.
  auto intercept_stmt = [&](const std::string& n) -> const dsl::Intercept* {
    for (const auto& ic : spec.intercepts)
      if (ic.name == n) return &ic;
    return nullptr;
  };
  for (int j = 0; j < pm.p; ++j) {
    const std::string& n = spec.manifest[j];
    Cell cell{MatrixId::Nu, j, 0};
    if (const auto* ic = intercept_stmt(n)) {
      b.add(n, Group::Intercept, false, cell, ic->tag);
    } else if (reference.count(j)) {
      b.add_fixed(cell, 0.0);
    } else {
      b.add(n, Group::Intercept, false, cell, Tag{});
    }
  }
  for (int s = 0; s < pm.l; ++s) {
    const std::string& n = spec.latent[s];
    Cell cell{MatrixId::Alpha, s, 0};
    if (const auto* ic = intercept_stmt(n)) b.add(n, Group::Intercept, false, cell, ic->tag);
    else b.add(n, Group::Intercept, false, cell, Tag{});
  }

  // Variances (log scale), then declared covariances (natural scale).
  auto cov_stmt = [&](const std::string& x, const std::string& y) -> const dsl::Cov* {
    for (const auto& c : spec.covs)
      if ((c.a == x && c.b == y) || (c.a == y && c.b == x)) return &c;
    return nullptr;
  };
  for (int j = 0; j < pm.p; ++j) {
    const std::string& n = spec.manifest[j];
    Cell cell{MatrixId::Theta, j, j};
    const auto* cs = cov_stmt(n, n);
    if (spec.kind_of(n) == dsl::VarKind::Binary) {
      // parse_model guarantees any explicit statement fixes it at 1
      b.add_fixed(cell, 1.0);
    } else {
      b.add("var(" + n + ")", Group::Variance, true, cell, cs ? cs->tag : Tag{});
    }
  }
  for (int s = 0; s < pm.l; ++s) {
    const std::string& n = spec.latent[s];
    Cell cell{MatrixId::Psi, s, s};
    const auto* cs = cov_stmt(n, n);
    b.add("var(" + n + ")", Group::Variance, true, cell, cs ? cs->tag : Tag{});
  }
  for (const auto& c : spec.covs) {
    if (c.a == c.b) continue;
    const bool latent_pair = spec.is_latent(c.a);
    const MatrixId mid = latent_pair ? MatrixId::Psi : MatrixId::Theta;
    const int i = latent_pair ? spec.latent_index(c.a) : spec.manifest_index(c.a);
    const int j = latent_pair ? spec.latent_index(c.b) : spec.manifest_index(c.b);
    const std::string name = "cov(" + c.a + "," + c.b + ")";
    if (c.tag.kind == Tag::Kind::Fixed) {
      b.add_fixed({mid, i, j}, c.tag.value);
      b.add_fixed({mid, j, i}, c.tag.value);
    } else {
      const int t = b.add_free(name, Group::Variance, false, {mid, i, j}, c.tag);
      pm.params[t].cells.push_back({mid, j, i});  // mirror cell, same parameter
    }
  }

  return pm;
}

namespace {

void place(StructMatrices& m, const Cell& cell, double v) {
  switch (cell.m) {
    case MatrixId::Nu: m.nu(cell.r) = v; break;
    case MatrixId::Alpha: m.alpha(cell.r) = v; break;
    case MatrixId::Lambda: m.Lambda(cell.r, cell.c) = v; break;
    case MatrixId::Kappa: m.Kappa(cell.r, cell.c) = v; break;
    case MatrixId::Beta: m.Beta(cell.r, cell.c) = v; break;
    case MatrixId::Gamma: m.Gamma(cell.r, cell.c) = v; break;
    case MatrixId::Theta: m.Theta(cell.r, cell.c) = v; break;
    case MatrixId::Psi: m.Psi(cell.r, cell.c) = v; break;
    case MatrixId::DeltaSlope: m.delta(cell.r) = v; break;
    case MatrixId::TauSlope: m.tau(cell.r) = v; break;
  }
}

}  // namespace

StructMatrices build_matrices(const ParameterMap& pm, const Vec& theta) {
  if (theta.size() != pm.dim())
    throw Error("parameter vector has length " + std::to_string(theta.size()) +
                ", expected " + std::to_string(pm.dim()));
  StructMatrices m;
  m.nu = Vec::Zero(pm.p);
  m.alpha = Vec::Zero(pm.l);
  m.Lambda = Mat::Zero(pm.p, pm.l);
  m.Kappa = Mat::Zero(pm.p, pm.q);
  m.Beta = Mat::Zero(pm.l, pm.l);
  m.Gamma = Mat::Zero(pm.l, pm.q);
  m.Theta = Mat::Zero(pm.p, pm.p);
  m.Psi = Mat::Zero(pm.l, pm.l);
  m.delta = Vec::Zero(static_cast<int>(pm.delta_slopes.size()));
  m.tau = Vec::Zero(static_cast<int>(pm.tau_slopes.size()));
  for (const auto& f : pm.fixed) place(m, f.cell, f.value);
  for (int t = 0; t < pm.dim(); ++t) {
    const auto& pi = pm.params[t];
    const double v = pi.log_scale ? std::exp(theta(t)) : theta(t);
    for (const auto& cell : pi.cells) place(m, cell, v);
  }
  return m;
}

Vec internal_from_natural(const ParameterMap& pm, const Vec& natural) {
  Vec out = natural;
  for (int t = 0; t < pm.dim(); ++t) {
    if (!pm.params[t].log_scale) continue;
    if (!(natural(t) > 0.0))
      throw Error("variance parameter '" + pm.params[t].name + "' must be positive");
    out(t) = std::log(natural(t));
  }
  return out;
}

Vec natural_from_internal(const ParameterMap& pm, const Vec& internal) {
  Vec out = internal;
  for (int t = 0; t < pm.dim(); ++t)
    if (pm.params[t].log_scale) out(t) = std::exp(internal(t));
  return out;
}

Vec default_true_values(const ParameterMap& pm) {
  Vec out(pm.dim());
  for (int t = 0; t < pm.dim(); ++t) {
    const auto& pi = pm.params[t];
    if (pi.group == Group::Intercept) out(t) = 0.0;
    else if (pi.group == Group::Variance && !pi.log_scale) out(t) = 0.0;  // covariance
    else out(t) = 1.0;
  }
  return out;
}

}  // namespace model
}  // namespace latcens

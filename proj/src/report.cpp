#include "latcens/report.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

namespace latcens {
namespace report {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string num(double v) { return std::isfinite(v) ? fmt("%.7f", v) : "NA"; }

std::string pval(double p, bool log_scale) {
  if (log_scale || std::isnan(p)) return "";
  if (p < 1e-16) return "<1e-16";
  return fmt("%.4g", p);
}

const char* heading(model::Group g) {
  switch (g) {
    case model::Group::Measurement: return "Measurements:";
    case model::Group::Regression: return "Regressions:";
    case model::Group::Intercept: return "Intercepts:";
    case model::Group::Variance: return "Residual Variances:";
  }
  return "";
}

nlohmann::ordered_json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::string display_name(const std::string& name, model::Group group) {
  if (group == model::Group::Variance && name.rfind("var(", 0) == 0 &&
      name.back() == ')')
    return name.substr(4, name.size() - 5);
  return name;
}

void print_table(std::ostream& out, const est::FitResult& fit,
                 const model::ParameterMap& pm) {
  const int d = pm.dim();
  out << (fit.composite ? "Composite log-likelihood: " : "Log-likelihood: ")
      << fmt("%.4f", fit.loglik) << "   n = " << fit.n_rows << ", "
      << fit.iterations << (fit.iterations == 1 ? " iteration, " : " iterations, ")
      << (fit.converged ? "converged" : "NOT converged") << "\n";

  size_t name_w = 4;
  for (int t = 0; t < d; ++t)
    name_w = std::max(name_w, display_name(pm.params[t].name, pm.params[t].group).size());

  const auto pad = [](std::string s, size_t w) {
    while (s.size() < w) s.insert(s.begin(), ' ');
    return s;
  };

  for (model::Group g : {model::Group::Measurement, model::Group::Regression,
                         model::Group::Intercept, model::Group::Variance}) {
    bool any = false;
    for (int t = 0; t < d; ++t) any = any || pm.params[t].group == g;
    if (!any) continue;
    out << "\n" << heading(g) << "\n";
    out << std::string(name_w + 2, ' ') << pad("Estimate", 12) << pad("Std. Error", 12)
        << pad("Z value", 10) << pad("Pr(>|z|)", 10) << "\n";
    for (int t = 0; t < d; ++t) {
      const auto& par = pm.params[t];
      if (par.group != g) continue;
      std::string label = display_name(par.name, par.group);
      label.resize(name_w, ' ');
      out << "  " << label << pad(num(fit.estimate(t)), 12)
          << pad(num(fit.se_nat(t)), 12)
          << pad(std::isfinite(fit.z(t)) ? fmt("%.4f", fit.z(t)) : "", 10)
          << pad(pval(fit.p(t), par.log_scale), 10) << "\n";
    }
  }
}

std::string to_json(const est::FitResult& fit, const model::ParameterMap& pm,
                    const std::string& command) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["command"] = command;
  j["converged"] = fit.converged;
  j["composite"] = fit.composite;
  j["loglik"] = finite_or_null(fit.loglik);
  j["n_rows"] = fit.n_rows;
  j["iterations"] = fit.iterations;
  j["gradient_norm"] = finite_or_null(fit.gradient_norm);
  j["note"] = fit.note;

  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (int t = 0; t < pm.dim(); ++t) {
    const auto& par = pm.params[t];
    nlohmann::ordered_json row;
    row["name"] = par.name;
    switch (par.group) {
      case model::Group::Measurement: row["group"] = "measurement"; break;
      case model::Group::Regression: row["group"] = "regression"; break;
      case model::Group::Intercept: row["group"] = "intercept"; break;
      case model::Group::Variance: row["group"] = "variance"; break;
    }
    row["estimate"] = finite_or_null(fit.estimate(t));
    row["se"] = finite_or_null(fit.se_nat(t));
    row["z"] = finite_or_null(fit.z(t));
    row["p"] = finite_or_null(fit.p(t));
    params.push_back(std::move(row));
  }
  j["parameters"] = std::move(params);

  nlohmann::ordered_json vcov = nlohmann::ordered_json::array();
  for (int r = 0; r < fit.vcov.rows(); ++r) {
    nlohmann::ordered_json rowj = nlohmann::ordered_json::array();
    for (int c = 0; c < fit.vcov.cols(); ++c) rowj.push_back(finite_or_null(fit.vcov(r, c)));
    vcov.push_back(std::move(rowj));
  }
  j["vcov_internal"] = std::move(vcov);

  nlohmann::ordered_json ti = nlohmann::ordered_json::array(),
                         si = nlohmann::ordered_json::array();
  for (int t = 0; t < fit.theta_hat.size(); ++t) {
    ti.push_back(finite_or_null(fit.theta_hat(t)));
    si.push_back(finite_or_null(fit.se(t)));
  }
  j["theta_internal"] = std::move(ti);
  j["se_internal"] = std::move(si);

  return j.dump(2) + "\n";
}

}  // namespace report
}  // namespace latcens

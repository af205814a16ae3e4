#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "latcens/complik.hpp"
#include "latcens/estimate.hpp"
#include "latcens/report.hpp"
#include "latcens/simulate.hpp"
#include "latcens/study.hpp"

using namespace latcens;
using model::Vec;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

model::ParameterMap load_model(const std::string& path) {
  return model::compile(dsl::parse_model(slurp(path)));
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse number '" + s + "' in " + what);
  }
}

// name=value pairs from --set, applied on the natural scale.
Vec truth_from_sets(const model::ParameterMap& pm,
                    const std::vector<std::string>& sets, bool ignore_unknown) {
  Vec truth = model::default_true_values(pm);
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw DataError("--set expects name=value, got '" + s + "'");
    const std::string name = s.substr(0, eq);
    const int t = pm.index_of(name);
    if (t < 0) {
      if (ignore_unknown) continue;
      throw DataError("--set names unknown parameter '" + name + "'");
    }
    truth(t) = parse_num(s.substr(eq + 1), "--set " + s);
  }
  return truth;
}

// --censor var:side:bound (or var:both:lower:upper). Declared-censored
// variables get a simulation law; continuous variables are clipped after the
// fact. Returns the transforms; laws land in `sim`.
struct CensorSpec {
  std::string var;
  dsl::VarKind kind;
  double lower = 0, upper = 0;
};

CensorSpec parse_censor(const std::string& arg) {
  const auto parts = split(arg, ':');
  if (parts.size() < 3) throw DataError("--censor expects var:side:bound, got '" + arg + "'");
  CensorSpec c;
  c.var = parts[0];
  const std::string& side = parts[1];
  if (side == "left") {
    c.kind = dsl::VarKind::CensoredLeft;
    if (parts.size() != 3) throw DataError("--censor " + arg + ": left takes one bound");
    c.lower = parse_num(parts[2], "--censor " + arg);
  } else if (side == "right") {
    c.kind = dsl::VarKind::CensoredRight;
    if (parts.size() != 3) throw DataError("--censor " + arg + ": right takes one bound");
    c.upper = parse_num(parts[2], "--censor " + arg);
  } else if (side == "both") {
    c.kind = dsl::VarKind::CensoredBoth;
    if (parts.size() != 4) throw DataError("--censor " + arg + ": both takes lower:upper");
    c.lower = parse_num(parts[2], "--censor " + arg);
    c.upper = parse_num(parts[3], "--censor " + arg);
  } else {
    throw DataError("--censor side must be left, right or both, got '" + side + "'");
  }
  return c;
}

// Applies --censor/--dichotomize against the model that will SEE the data:
// laws for variables the simulation model declares censored, post-hoc
// transforms for everything else.
struct Transforms {
  sim::SimOptions sim;
  std::vector<std::function<data::Dataset(data::Dataset)>> steps;

  data::Dataset apply(data::Dataset d) const {
    for (const auto& f : steps) d = f(std::move(d));
    return d;
  }
};

Transforms build_transforms(const model::ParameterMap& sim_pm,
                            const std::vector<std::string>& censors,
                            const std::vector<std::string>& dichos) {
  Transforms tr;
  for (const std::string& arg : censors) {
    const CensorSpec c = parse_censor(arg);
    const dsl::ModelSpec& spec = sim_pm.spec;
    if (spec.is_manifest(c.var) && spec.censorable(c.var) &&
        spec.kind_of(c.var) != dsl::VarKind::Binary) {
      if (spec.kind_of(c.var) != c.kind)
        throw DataError("--censor " + arg + " disagrees with the declared censoring side");
      switch (c.kind) {
        case dsl::VarKind::CensoredLeft:
          tr.sim.censoring[c.var] = sim::CensoringLaw::fixed_left(c.lower);
          break;
        case dsl::VarKind::CensoredRight:
          tr.sim.censoring[c.var] = sim::CensoringLaw::fixed_right(c.upper);
          break;
        default:
          tr.sim.censoring[c.var] = sim::CensoringLaw::fixed_both(c.lower, c.upper);
          break;
      }
    } else {
      if (c.kind == dsl::VarKind::CensoredBoth) {
        const double lo = c.lower, hi = c.upper;
        const std::string var = c.var;
        tr.steps.push_back([var, lo, hi](data::Dataset d) {
          d = sim::censor(std::move(d), var, sim::Side::Left, lo);
          return sim::censor(std::move(d), var, sim::Side::Right, hi);
        });
      } else {
        const sim::Side side =
            c.kind == dsl::VarKind::CensoredLeft ? sim::Side::Left : sim::Side::Right;
        const double bound = c.kind == dsl::VarKind::CensoredLeft ? c.lower : c.upper;
        const std::string var = c.var;
        tr.steps.push_back([var, side, bound](data::Dataset d) {
          return sim::censor(std::move(d), var, side, bound);
        });
      }
    }
  }
  for (const std::string& arg : dichos) {
    const auto parts = split(arg, ':');
    if (parts.size() != 2)
      throw DataError("--dichotomize expects var:cut, got '" + arg + "'");
    const std::string var = parts[0];
    const double cut = parse_num(parts[1], "--dichotomize " + arg);
    tr.steps.push_back(
        [var, cut](data::Dataset d) { return sim::dichotomize(std::move(d), var, cut); });
  }
  return tr;
}

cl::BlockPlan plan_from_flags(const dsl::ModelSpec& spec, const std::string& blocks,
                              int k) {
  if (blocks == "adjacent") return cl::build_blocks(spec, k, cl::BlockStrategy::adjacent());
  if (blocks == "pairs") return cl::build_blocks(spec, k, cl::BlockStrategy::all_pairs());
  // Otherwise a file: one block per line, whitespace-separated variable names.
  std::istringstream in(slurp(blocks));
  std::vector<std::vector<std::string>> custom;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> names;
    std::string nm;
    while (ls >> nm) names.push_back(nm);
    if (!names.empty()) custom.push_back(std::move(names));
  }
  return cl::build_blocks(spec, k, cl::BlockStrategy::custom_plan(std::move(custom)));
}

int finish_fit(const est::FitResult& fit, const model::ParameterMap& pm,
               const std::string& command, const std::string& out_path, bool quiet) {
  if (!quiet) report::print_table(std::cout, fit, pm);
  if (!out_path.empty()) write_file(out_path, report::to_json(fit, pm, command));
  if (!fit.converged) {
    std::cerr << "warning: estimation did not converge"
              << (fit.note.empty() ? "" : ": " + fit.note) << "\n";
    return 4;
  }
  if (!fit.note.empty()) {
    std::cerr << "warning: " << fit.note << "\n";
    return 4;
  }
  return 0;
}

struct FitArgs {
  std::string model, data, out;
  double tol = 0;
  std::string algorithm = "bhhh";
  bool quiet = false;
};

void add_fit_options(CLI::App* cmd, FitArgs& a) {
  cmd->add_option("--model", a.model, "model file")->required();
  cmd->add_option("--data", a.data, "CSV data file")->required();
  cmd->add_option("--out", a.out, "write a JSON result here");
  cmd->add_option("--tol", a.tol, "score tolerance override");
  cmd->add_option("--algorithm", a.algorithm, "bhhh or bfgs")
      ->check(CLI::IsMember({"bhhh", "bfgs"}));
  cmd->add_flag("--quiet", a.quiet, "suppress the parameter table");
}

est::FitOptions fit_options(const FitArgs& a) {
  est::FitOptions fo;
  if (a.tol > 0) fo.score_tol = a.tol;
  if (a.algorithm == "bfgs") fo.algorithm = est::Algorithm::Bfgs;
  return fo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent variable models with binary and censored indicators"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* cmd_fit = app.add_subcommand("fit", "maximum likelihood estimation");
  add_fit_options(cmd_fit, fit_args);

  FitArgs clfit_args;
  std::string clfit_blocks = "adjacent";
  int clfit_k = 2;
  CLI::App* cmd_clfit =
      app.add_subcommand("clfit", "composite marginal likelihood estimation");
  add_fit_options(cmd_clfit, clfit_args);
  cmd_clfit->add_option("--blocks", clfit_blocks,
                        "adjacent, pairs, or a file of name blocks");
  cmd_clfit->add_option("--k", clfit_k, "block size")->check(CLI::PositiveNumber);

  struct {
    std::string model, out, covariates;
    int n = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> sets, censors, dichos;
    bool quiet = false;
  } sim_args;
  CLI::App* cmd_sim = app.add_subcommand("simulate", "draw a dataset from a model");
  cmd_sim->add_option("--model", sim_args.model, "model file")->required();
  cmd_sim->add_option("--out", sim_args.out, "CSV output path")->required();
  cmd_sim->add_option("--n", sim_args.n, "rows to draw")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_sim->add_option("--seed", sim_args.seed, "RNG seed")->required();
  cmd_sim->add_option("--set", sim_args.sets, "parameter override name=value");
  cmd_sim->add_option("--censor", sim_args.censors,
                      "censoring var:side:bound (both: var:both:lower:upper)");
  cmd_sim->add_option("--dichotomize", sim_args.dichos, "threshold var:cut");
  cmd_sim->add_option("--covariates", sim_args.covariates,
                      "CSV to draw covariate columns from");
  cmd_sim->add_flag("--quiet", sim_args.quiet, "no summary line");

  struct {
    std::string model, fit_model, out, blocks = "adjacent", estimator = "mle";
    int n = 500, reps = 200, k = 2, threads = 1;
    std::uint64_t seed = 0;
    double tol = 0;
    std::vector<std::string> sets, censors, dichos;
    bool quiet = false;
  } study_args;
  CLI::App* cmd_study =
      app.add_subcommand("study", "Monte Carlo replications of simulate + fit");
  cmd_study->add_option("--model", study_args.model, "simulation model file")->required();
  cmd_study->add_option("--fit-model", study_args.fit_model,
                        "model to estimate (defaults to --model)");
  cmd_study->add_option("--n", study_args.n, "rows per replication")
      ->check(CLI::PositiveNumber);
  cmd_study->add_option("--reps", study_args.reps, "replications")
      ->check(CLI::PositiveNumber);
  cmd_study->add_option("--seed", study_args.seed, "master seed")->required();
  cmd_study->add_option("--set", study_args.sets, "true value override name=value");
  cmd_study->add_option("--censor", study_args.censors, "as in simulate");
  cmd_study->add_option("--dichotomize", study_args.dichos, "as in simulate");
  cmd_study->add_option("--estimator", study_args.estimator, "mle or cl")
      ->check(CLI::IsMember({"mle", "cl"}));
  cmd_study->add_option("--blocks", study_args.blocks, "block strategy for --estimator cl");
  cmd_study->add_option("--k", study_args.k, "block size for --estimator cl")
      ->check(CLI::PositiveNumber);
  cmd_study->add_option("--threads", study_args.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  cmd_study->add_option("--tol", study_args.tol, "score tolerance override");
  cmd_study->add_option("--out", study_args.out, "write a JSON summary here");
  cmd_study->add_flag("--quiet", study_args.quiet, "suppress the summary table");

  struct {
    std::string model, data;
    double tol = 1e-5;
    int rows = 50;
    bool inject = false;
  } check_args;
  CLI::App* cmd_check =
      app.add_subcommand("score-check", "finite-difference audit of the analytic score");
  cmd_check->add_option("--model", check_args.model, "model file")->required();
  cmd_check->add_option("--data", check_args.data, "CSV data file")->required();
  cmd_check->add_option("--tol", check_args.tol, "maximum relative error accepted");
  cmd_check->add_option("--rows", check_args.rows, "rows to audit (from the top)")
      ->check(CLI::PositiveNumber);
  cmd_check->add_flag("--inject-score-error", check_args.inject, "corrupt the score")
      ->group("");  // hidden: exists so the audit's failure path stays testable

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_fit->parsed()) {
      const auto pm = load_model(fit_args.model);
      const auto d = data::read_csv_file(fit_args.data);
      const auto fit = est::fit_mle(pm, d, fit_options(fit_args));
      return finish_fit(fit, pm, "fit", fit_args.out, fit_args.quiet);
    }

    if (cmd_clfit->parsed()) {
      const auto pm = load_model(clfit_args.model);
      const auto d = data::read_csv_file(clfit_args.data);
      const auto plan = plan_from_flags(pm.spec, clfit_blocks, clfit_k);
      const auto fit = cl::fit_cl(pm, d, plan, fit_options(clfit_args));
      return finish_fit(fit, pm, "clfit", clfit_args.out, clfit_args.quiet);
    }

    if (cmd_sim->parsed()) {
      const auto pm = load_model(sim_args.model);
      const Vec truth = truth_from_sets(pm, sim_args.sets, false);
      Transforms tr = build_transforms(pm, sim_args.censors, sim_args.dichos);
      data::Dataset cov_source;
      if (!sim_args.covariates.empty()) {
        cov_source = data::read_csv_file(sim_args.covariates);
        tr.sim.covariates = sim::CovariateLaw::from_data(cov_source);
      }
      auto d = sim::simulate(pm, model::internal_from_natural(pm, truth), sim_args.n,
                             sim_args.seed, tr.sim);
      d = tr.apply(std::move(d));
      std::ostringstream csv;
      data::write_csv(d, csv);
      write_file(sim_args.out, csv.str());
      if (!sim_args.quiet)
        std::cout << "wrote " << d.n() << " rows x " << d.ncol() << " columns to "
                  << sim_args.out << "\n";
      return 0;
    }

    if (cmd_study->parsed()) {
      const auto sim_pm = load_model(study_args.model);
      const auto fit_pm = study_args.fit_model.empty() ? sim_pm
                                                       : load_model(study_args.fit_model);
      const Vec truth_sim = truth_from_sets(sim_pm, study_args.sets, false);
      // Bias is judged against the same named values on the fit model's
      // parameters; overrides that only exist in the simulation model are
      // design knobs, not fit-model truths.
      const Vec truth_fit = truth_from_sets(fit_pm, study_args.sets, true);

      Transforms tr = build_transforms(sim_pm, study_args.censors, study_args.dichos);
      study::StudyOptions so;
      so.reps = study_args.reps;
      so.n = study_args.n;
      so.seed = study_args.seed;
      so.threads = study_args.threads;
      so.sim = tr.sim;
      if (study_args.tol > 0) so.fit.score_tol = study_args.tol;
      if (!tr.steps.empty())
        so.transform = [&tr](data::Dataset d) { return tr.apply(std::move(d)); };
      if (study_args.estimator == "cl") {
        const auto plan = plan_from_flags(fit_pm.spec, study_args.blocks, study_args.k);
        so.fitter = [plan](const model::ParameterMap& pm, const data::Dataset& d,
                           const est::FitOptions& fo) { return cl::fit_cl(pm, d, plan, fo); };
      }

      const auto res = study::run_study(sim_pm, truth_sim, fit_pm, truth_fit, so);
      if (!study_args.quiet) study::print_study(std::cout, res);
      if (!study_args.out.empty()) write_file(study_args.out, study::study_json(res));
      if (res.failed > 0)
        std::cerr << "warning: " << res.failed << " replication(s) dropped: " << res.note
                  << "\n";
      return 0;
    }

    if (cmd_check->parsed()) {
      const auto pm = load_model(check_args.model);
      const auto d = data::read_csv_file(check_args.data);
      const lik::Evaluator ev(pm, d);
      const Vec theta = model::starting_values(pm, d);
      const int rows = std::min(check_args.rows, ev.n());
      double worst = 0.0;
      for (int i = 0; i < rows; ++i) {
        Vec s = ev.score_row(theta, i);
        if (check_args.inject) s.array() += 1e-3;
        for (int t = 0; t < theta.size(); ++t) {
          const double h = 1e-5 * std::max(1.0, std::abs(theta(t)));
          Vec tp = theta, tm = theta;
          tp(t) += h;
          tm(t) -= h;
          const double fd = (ev.loglik_row(tp, i) - ev.loglik_row(tm, i)) / (2.0 * h);
          const double err =
              std::abs(s(t) - fd) / std::max({1.0, std::abs(s(t)), std::abs(fd)});
          worst = std::max(worst, err);
        }
      }
      std::cout << "max relative score error over " << rows << " rows: " << worst << "\n";
      if (worst >= check_args.tol) {
        std::cerr << "score audit FAILED (tolerance " << check_args.tol << ")\n";
        return 1;
      }
      std::cout << "score audit passed (tolerance " << check_args.tol << ")\n";
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include "latcens/complik.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ascent.hpp"
#include "latcens/common.hpp"

namespace latcens {
namespace cl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> splittable_indices(const dsl::ModelSpec& spec) {
  std::vector<int> out;
  for (size_t j = 0; j < spec.manifest.size(); ++j)
    if (spec.kind_of(spec.manifest[j]) != dsl::VarKind::Continuous)
      out.push_back(static_cast<int>(j));
  return out;
}

void normalize_block(std::vector<int>& b) {
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
}

}  // namespace

BlockPlan build_blocks(const dsl::ModelSpec& spec, int k, const BlockStrategy& strategy) {
  if (k < 1) throw DataError("block size must be at least 1");
  const std::vector<int> split = splittable_indices(spec);
  const int c = static_cast<int>(split.size());

  BlockPlan plan;
  switch (strategy.kind) {
    case BlockStrategy::Kind::Adjacent: {
      if (c == 0)
        throw DataError(
            "model has no binary or censored variables to block; pass an explicit plan");
      if (k > c)
        throw DataError("block size " + std::to_string(k) + " exceeds the " +
                        std::to_string(c) + " blockable variables");
      for (int i = 0; i + k <= c; ++i)
        plan.blocks.emplace_back(split.begin() + i, split.begin() + i + k);
      break;
    }
    case BlockStrategy::Kind::AllPairs: {
      if (k != 2) throw DataError("all-pairs blocking requires block size 2");
      if (k > c)
        throw DataError("block size 2 exceeds the " + std::to_string(c) +
                        " blockable variables");
      for (int i = 0; i < c; ++i)
        for (int j = i + 1; j < c; ++j) plan.blocks.push_back({split[i], split[j]});
      break;
    }
    case BlockStrategy::Kind::Custom: {
      if (strategy.custom.empty()) throw DataError("custom block plan is empty");
      for (const auto& names : strategy.custom) {
        if (names.empty()) throw DataError("custom block plan contains an empty block");
        std::vector<int> b;
        for (const std::string& nm : names) {
          const int j = spec.manifest_index(nm);
          if (j < 0)
            throw DataError("block variable '" + nm + "' is not a manifest variable");
          b.push_back(j);
        }
        plan.blocks.push_back(std::move(b));
      }
      break;
    }
  }

  // Continuous variables are never split across blocks.
  for (auto& b : plan.blocks) {
    for (size_t j = 0; j < spec.manifest.size(); ++j)
      if (spec.kind_of(spec.manifest[j]) == dsl::VarKind::Continuous)
        b.push_back(static_cast<int>(j));
    normalize_block(b);
  }
  return plan;
}

BlockEvaluator::BlockEvaluator(const model::ParameterMap& pm, const data::Dataset& d,
                               const BlockPlan& plan, lik::EvalOptions opts) {
  if (plan.blocks.empty()) throw DataError("block plan is empty");
  const int p = pm.p;
  for (const auto& b : plan.blocks) {
    if (b.empty()) throw DataError("block plan contains an empty block");
    for (int j : b)
      if (j < 0 || j >= p)
        throw DataError("block index " + std::to_string(j) + " is out of range");
  }
  n_ = d.n();
  dim_ = pm.dim();

  std::vector<char> row_hit(static_cast<size_t>(n_), 0);
  evs_.reserve(plan.blocks.size());
  for (const auto& b : plan.blocks) {
    const std::set<int> keep(b.begin(), b.end());
    data::Dataset masked = d;
    for (int j = 0; j < p; ++j) {
      if (keep.count(j)) continue;
      const int col = masked.col_index(pm.spec.manifest[j]);
      if (col >= 0) masked.values.col(col).setConstant(kNaN);
    }
    evs_.emplace_back(pm, masked, opts);
    contributing_units_ += n_ - evs_.back().skipped_rows();
    std::vector<int> cols;
    for (int j : b) {
      const int col = d.col_index(pm.spec.manifest[j]);
      if (col >= 0) cols.push_back(col);
    }
    for (int i = 0; i < n_; ++i)
      for (int col : cols)
        if (!std::isnan(d.values(i, col))) {
          row_hit[i] = 1;
          break;
        }
  }
  for (char h : row_hit) contributing_rows_ += h;
}

double BlockEvaluator::loglik(const Vec& theta) const {
  double total = 0.0;
  for (const auto& ev : evs_) total += ev.loglik(theta);
  return total;
}

double BlockEvaluator::loglik_and_scores(const Vec& theta, Mat& scores) const {
  scores.resize(n_ * n_blocks(), dim_);
  double total = 0.0;
  Mat sb;
  for (int b = 0; b < n_blocks(); ++b) {
    total += evs_[b].loglik_and_scores(theta, sb);
    scores.middleRows(b * n_, n_) = sb;
  }
  return total;
}

Vec BlockEvaluator::score(const Vec& theta) const {
  Vec total = Vec::Zero(dim_);
  for (const auto& ev : evs_) total += ev.score(theta);
  return total;
}

double cl_loglik(const model::ParameterMap& pm, const Vec& theta,
                 const data::Dataset& d, const BlockPlan& plan, lik::EvalOptions opts) {
  return BlockEvaluator(pm, d, plan, opts).loglik(theta);
}

Vec cl_score(const model::ParameterMap& pm, const Vec& theta,
             const data::Dataset& d, const BlockPlan& plan, lik::EvalOptions opts) {
  return BlockEvaluator(pm, d, plan, opts).score(theta);
}

namespace {

// Every manifest variable addressed by a free parameter must appear in some
// block, or the composite likelihood simply never sees that parameter.
void check_coverage(const model::ParameterMap& pm, const BlockPlan& plan) {
  std::vector<char> covered(static_cast<size_t>(pm.p), 0);
  for (const auto& b : plan.blocks)
    for (int j : b) covered[static_cast<size_t>(j)] = 1;

  auto require = [&](int j, const std::string& par) {
    if (!covered[static_cast<size_t>(j)])
      throw DataError("no block covers variable '" + pm.spec.manifest[j] +
                      "', so parameter '" + par +
                      "' is not identified by this block plan");
  };
  for (const auto& par : pm.params)
    for (const model::Cell& cell : par.cells) switch (cell.m) {
        case model::MatrixId::Nu:
        case model::MatrixId::Lambda:
        case model::MatrixId::Kappa:
          require(cell.r, par.name);
          break;
        case model::MatrixId::Theta:
          require(cell.r, par.name);
          require(cell.c, par.name);
          break;
        case model::MatrixId::DeltaSlope:
          require(pm.delta_slopes[static_cast<size_t>(cell.r)].outcome, par.name);
          break;
        default:
          break;  // structural parameters reach the data through the rows above
      }
}

}  // namespace

est::FitResult fit_cl(const model::ParameterMap& pm, const data::Dataset& d,
                      const BlockPlan& plan, const est::FitOptions& opts) {
  const int dim = pm.dim();
  if (dim < 1) throw DataError("model has no free parameters");
  check_coverage(pm, plan);

  BlockEvaluator ev(pm, d, plan, {opts.cdf});
  const int n_eff = ev.contributing_rows();
  if (n_eff < 1) throw DataError("no likelihood-contributing rows");

  Vec theta = opts.start ? *opts.start : model::starting_values(pm, d);
  if (theta.size() != dim)
    throw DataError("starting values have length " + std::to_string(theta.size()) +
                    ", model has " + std::to_string(dim) + " free parameters");

  const est::AscentResult a = est::maximize_by_scores(
      [&](const Vec& t) { return ev.loglik(t); },
      [&](const Vec& t, Mat& S) { return ev.loglik_and_scores(t, S); }, std::move(theta),
      std::max(ev.contributing_units(), 1), opts);

  est::FitResult res;
  res.names = pm.names();
  res.theta_hat = a.theta;
  res.loglik = a.value;
  res.iterations = a.iterations;
  res.converged = a.converged;
  res.gradient_norm = a.gradient_norm;
  res.n_rows = n_eff;
  res.composite = true;
  if (a.search_failed)
    est::append_note(res.note, "line search could not improve the composite log-likelihood");

  // Godambe sandwich on the row-level sums: row i's composite score is the sum
  // of its per-block scores.
  const int n = ev.n();
  Mat U = Mat::Zero(n, dim);
  for (int b = 0; b < ev.n_blocks(); ++b) U += a.scores.middleRows(b * n, n);
  const Mat info = a.scores.transpose() * a.scores;
  const Mat outer = U.transpose() * U;

  Mat iinv;
  bool se_ok = est::psd_inverse(info, iinv);
  Mat vcov;
  if (se_ok) {
    const Mat sand = iinv * outer * iinv;
    vcov = 0.5 * (sand + sand.transpose());
  } else {
    est::append_note(res.note,
                     "composite information is singular; standard errors unavailable "
                     "(the block plan may not identify the model)");
  }
  est::fill_inference(res, pm, se_ok, vcov);
  return res;
}

}  // namespace cl
}  // namespace latcens

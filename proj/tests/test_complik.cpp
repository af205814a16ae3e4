#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "latcens/complik.hpp"
#include "latcens/estimate.hpp"
#include "latcens/simulate.hpp"
#include "support/modelutil.hpp"
#include "support/testutil.hpp"

using namespace latcens;
using model::Mat;
using model::Vec;
using testutil::theta_with;

namespace {

model::ParameterMap compile(const char* text) {
  return model::compile(dsl::parse_model(text));
}

// Three-indicator factor design with every indicator dichotomized or censored,
// so pairwise blocking has something to do: 9 free parameters, var(Y1) pinned
// by the binary convention and Y1 the reference indicator.
const char* kAllCensFit = R"(
latent eta
binary Y1 Y2
censored right Y3
Y1 <- eta @1
Y2 <- eta
Y3 <- eta
eta <- X1
eta <- X2
)";

const char* kAllCensTruth = R"(
latent eta
Y1 <- eta @1
Y2 <- eta
Y3 <- eta
eta <- X1
eta <- X2
)";

// Mixed design: Y1 stays continuous and must ride along with every block.
const char* kMixedFit = R"(
latent eta
binary Y2
censored right Y3
Y1 <- eta @1
Y2 <- eta
Y3 <- eta
eta <- X1
eta <- X2
)";

data::Dataset all_cens_data(int n, std::uint64_t seed) {
  const auto truth = compile(kAllCensTruth);
  auto d = sim::simulate(truth, theta_with(truth, {}), n, seed);
  d = sim::dichotomize(d, "Y1", 0.0);
  d = sim::dichotomize(d, "Y2", 0.0);
  return sim::censor(d, "Y3", sim::Side::Right, 1.5);
}

}  // namespace

TEST_CASE("blocking follows declaration order over dichotomized variables") {
  const auto pm = compile(kAllCensFit);

  auto plan = cl::build_blocks(pm.spec, 2, cl::BlockStrategy::adjacent());
  REQUIRE(plan.blocks.size() == 2);
  CHECK(plan.blocks[0] == std::vector<int>{0, 1});
  CHECK(plan.blocks[1] == std::vector<int>{1, 2});

  auto full = cl::build_blocks(pm.spec, 3, cl::BlockStrategy::adjacent());
  REQUIRE(full.blocks.size() == 1);
  CHECK(full.blocks[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("continuous variables join every block instead of being split") {
  const auto pm = compile(kMixedFit);  // Y1 continuous, Y2 binary, Y3 censored

  auto plan = cl::build_blocks(pm.spec, 1, cl::BlockStrategy::adjacent());
  REQUIRE(plan.blocks.size() == 2);
  CHECK(plan.blocks[0] == std::vector<int>{0, 1});  // {Y2} + Y1
  CHECK(plan.blocks[1] == std::vector<int>{0, 2});  // {Y3} + Y1

  auto pairs = cl::build_blocks(pm.spec, 2, cl::BlockStrategy::adjacent());
  REQUIRE(pairs.blocks.size() == 1);
  CHECK(pairs.blocks[0] == std::vector<int>{0, 1, 2});

  auto custom = cl::build_blocks(
      pm.spec, 2, cl::BlockStrategy::custom_plan({{"Y3", "Y2", "Y2"}, {"Y2"}}));
  REQUIRE(custom.blocks.size() == 2);
  CHECK(custom.blocks[0] == std::vector<int>{0, 1, 2});
  CHECK(custom.blocks[1] == std::vector<int>{0, 1});
}

TEST_CASE("all-pairs blocking enumerates the C(p,2) pairs") {
  const auto pm = compile(R"(
latent f
binary W1 W2 W3 W4
W1 <- f @1
W2 <- f
W3 <- f
W4 <- f
)");
  auto plan = cl::build_blocks(pm.spec, 2, cl::BlockStrategy::all_pairs());
  REQUIRE(plan.blocks.size() == 6);
  int at = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) CHECK(plan.blocks[at++] == std::vector<int>({i, j}));
}

TEST_CASE("block construction rejects unusable requests") {
  const auto pm = compile(kAllCensFit);
  CHECK_THROWS_AS(cl::build_blocks(pm.spec, 0, cl::BlockStrategy::adjacent()), DataError);
  CHECK_THROWS_AS(cl::build_blocks(pm.spec, 4, cl::BlockStrategy::adjacent()), DataError);
  CHECK_THROWS_AS(cl::build_blocks(pm.spec, 3, cl::BlockStrategy::all_pairs()), DataError);
  CHECK_THROWS_AS(cl::build_blocks(pm.spec, 2, cl::BlockStrategy::custom_plan({})),
                  DataError);
  CHECK_THROWS_AS(
      cl::build_blocks(pm.spec, 2, cl::BlockStrategy::custom_plan({{"Y1", "nope"}})),
      DataError);
  CHECK_THROWS_AS(cl::build_blocks(pm.spec, 2, cl::BlockStrategy::custom_plan({{}})),
                  DataError);

  const auto cont = compile(kAllCensTruth);  // nothing binary or censored
  CHECK_THROWS_AS(cl::build_blocks(cont.spec, 2, cl::BlockStrategy::adjacent()), DataError);
}

TEST_CASE("a single full block reproduces the full likelihood and fit") {
  const auto pm = compile(kAllCensFit);
  const auto d = all_cens_data(400, 4501);
  const auto plan = cl::build_blocks(pm.spec, 3, cl::BlockStrategy::adjacent());

  const Vec theta =
      theta_with(pm, {{"Y2<-eta", 0.8}, {"eta<-X1", 1.2}, {"var(Y3)", 0.7}});
  CHECK(cl::cl_loglik(pm, theta, d, plan) == lik::loglik(pm, theta, d));
  const Vec cs = cl::cl_score(pm, theta, d, plan);
  const Vec fs = lik::score(pm, theta, d);
  CHECK((cs - fs).lpNorm<Eigen::Infinity>() == 0.0);

  const auto mle = est::fit_mle(pm, d);
  const auto clf = cl::fit_cl(pm, d, plan);
  REQUIRE(mle.converged);
  REQUIRE(clf.converged);
  CHECK(!mle.composite);
  CHECK(clf.composite);
  CHECK((clf.theta_hat - mle.theta_hat).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK(clf.loglik == doctest::Approx(mle.loglik).epsilon(1e-14));
  // One block makes the sandwich collapse onto the inverse information.
  REQUIRE(mle.vcov.allFinite());
  REQUIRE(clf.vcov.allFinite());
  CHECK((clf.vcov - mle.vcov).cwiseAbs().maxCoeff() <=
        1e-7 * mle.vcov.cwiseAbs().maxCoeff());
  CHECK(testutil::max_rel_err(clf.se_nat, mle.se_nat) < 1e-6);
}

TEST_CASE("independent blocks factorize the likelihood") {
  const auto pm = compile(R"(
binary A
censored right B
intercept A
intercept B
)");
  const Vec truth = theta_with(pm, {{"A", 0.3}, {"B", -0.2}});
  sim::SimOptions so;
  so.censoring["B"] = sim::CensoringLaw::fixed_right(0.8);
  const auto d = sim::simulate(pm, truth, 500, 77, so);

  const auto plan = cl::build_blocks(pm.spec, 2, cl::BlockStrategy::custom_plan({{"A"}, {"B"}}));
  const Vec theta = theta_with(pm, {{"A", 0.1}, {"B", 0.1}});
  const double both = cl::cl_loglik(pm, theta, d, plan);
  const double full = lik::loglik(pm, theta, d);
  CHECK(testutil::rel_err(both, full) < 1e-12);
}

TEST_CASE("composite score matches finite differences of the composite loglik") {
  const auto pm = compile(kAllCensFit);
  const auto d = all_cens_data(250, 4502);
  const auto plan = cl::build_blocks(pm.spec, 2, cl::BlockStrategy::adjacent());
  const cl::BlockEvaluator ev(pm, d, plan);

  const Vec theta = theta_with(
      pm, {{"Y2<-eta", 1.1}, {"Y3<-eta", 0.9}, {"eta<-X2", 0.8}, {"var(eta)", 1.3}});
  const Vec s = ev.score(theta);
  const Vec fd =
      testutil::fd_gradient([&](const Vec& t) { return ev.loglik(t); }, theta, 1e-5);
  CHECK(testutil::max_rel_err(s, fd) < 1e-5);
}

TEST_CASE("a repeated block doubles its contribution") {
  const auto pm = compile(kAllCensFit);
  const auto d = all_cens_data(120, 4503);
  const auto once =
      cl::build_blocks(pm.spec, 2, cl::BlockStrategy::custom_plan({{"Y1", "Y2"}}));
  const auto twice = cl::build_blocks(
      pm.spec, 2, cl::BlockStrategy::custom_plan({{"Y1", "Y2"}, {"Y1", "Y2"}}));

  const Vec theta = theta_with(pm, {{"eta<-X1", 0.9}});
  CHECK(cl::cl_loglik(pm, theta, d, twice) == 2.0 * cl::cl_loglik(pm, theta, d, once));
  const Vec s1 = cl::cl_score(pm, theta, d, once);
  const Vec s2 = cl::cl_score(pm, theta, d, twice);
  CHECK((s2 - 2.0 * s1).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("plans that never see a parameter's variable are refused") {
  const auto pm = compile(kAllCensFit);
  const auto d = all_cens_data(100, 4504);
  const auto partial =
      cl::build_blocks(pm.spec, 2, cl::BlockStrategy::custom_plan({{"Y1", "Y2"}}));
  CHECK_THROWS_WITH_AS(cl::fit_cl(pm, d, partial),
                       doctest::Contains("Y3"), DataError);
}

TEST_CASE("adjacent pairs recover the dichotomized factor design") {
  const auto pm = compile(kAllCensFit);
  const auto d = all_cens_data(1500, 4505);
  const auto plan = cl::build_blocks(pm.spec, 2, cl::BlockStrategy::adjacent());

  const auto fit = cl::fit_cl(pm, d, plan);
  REQUIRE(fit.converged);
  CHECK(fit.composite);
  CHECK(fit.note.empty());
  CHECK(fit.n_rows == 1500);

  const std::vector<std::string> expected = {"Y2<-eta", "Y3<-eta", "eta<-X1",
                                             "eta<-X2", "Y2",      "Y3",
                                             "eta",     "var(Y3)", "var(eta)"};
  CHECK(fit.names == expected);

  // Truth: unit loadings/regressions/variances, zero intercepts. Godambe
  // standard errors should place every estimate within a 3-sigma band.
  const Vec truth_nat = model::natural_from_internal(pm, theta_with(pm, {}));
  for (int t = 0; t < pm.dim(); ++t) {
    REQUIRE(std::isfinite(fit.se_nat(t)));
    REQUIRE(fit.se_nat(t) > 0.0);
    CHECK(std::abs(fit.estimate(t) - truth_nat(t)) <= 3.0 * fit.se_nat(t));
  }

  // Sandwich pieces are symmetric and PSD at the solution.
  const cl::BlockEvaluator ev(pm, d, plan);
  Mat S;
  ev.loglik_and_scores(fit.theta_hat, S);
  const int n = d.n();
  Mat U = Mat::Zero(n, pm.dim());
  for (int b = 0; b < ev.n_blocks(); ++b) U += S.middleRows(b * n, n);
  const Mat info = S.transpose() * S;
  const Mat outer = U.transpose() * U;
  CHECK((info - info.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * info.cwiseAbs().maxCoeff());
  CHECK((outer - outer.transpose()).cwiseAbs().maxCoeff() <=
        1e-9 * outer.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Mat> ei(info), eo(outer), ev2(fit.vcov);
  CHECK(ei.eigenvalues().minCoeff() >= -1e-8 * ei.eigenvalues().maxCoeff());
  CHECK(eo.eigenvalues().minCoeff() >= -1e-8 * eo.eigenvalues().maxCoeff());
  CHECK((fit.vcov - fit.vcov.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ev2.eigenvalues().minCoeff() >= -1e-10 * ev2.eigenvalues().maxCoeff());

  // The composite objective did not regress from its starting point.
  const double ll0 = ev.loglik(model::starting_values(pm, d));
  CHECK(fit.loglik >= ll0);
}

TEST_CASE("rows missing a block's variables still contribute elsewhere") {
  const auto pm = compile(kAllCensFit);
  auto d = all_cens_data(60, 4506);
  const int y2 = d.require_col("Y2");
  d.values(3, y2) = std::numeric_limits<double>::quiet_NaN();
  d.values(7, y2) = std::numeric_limits<double>::quiet_NaN();

  const auto plan = cl::build_blocks(pm.spec, 2, cl::BlockStrategy::adjacent());
  const cl::BlockEvaluator ev(pm, d, plan);
  CHECK(ev.n_blocks() == 2);
  CHECK(ev.contributing_rows() == 60);           // Y1 and Y3 are present everywhere
  CHECK(ev.contributing_units() == 2 * 60);      // marginals drop entries, not rows
  const Vec theta = theta_with(pm, {});
  CHECK(std::isfinite(ev.loglik(theta)));

  const auto fit = cl::fit_cl(pm, d, plan);
  CHECK(fit.converged);
}

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "drugcomb/diagnostics.hpp"
#include "drugcomb/error.hpp"

using namespace drugcomb;

namespace {

Draw draw_with(std::vector<int> labels, double s2, double m0) {
  Draw d;
  d.labels = std::move(labels);
  const int r = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  for (int k = 0; k < r; ++k) d.clusters.push_back({Eigen::MatrixXd::Constant(1, 1, k), Eigen::MatrixXd::Zero(1, 1)});
  d.sigma_omega = Eigen::MatrixXd::Identity(2, 2);
  d.sigma_eps2 = s2;
  d.m0 = m0;
  return d;
}

}  // namespace

TEST_CASE("quantile is linear interpolation") {
  CHECK(quantile({3, 1, 2, 4}, 0.0) == 1.0);
  CHECK(quantile({3, 1, 2, 4}, 1.0) == 4.0);
  CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
  CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
  CHECK_THROWS_AS(quantile({}, 0.5), Error);
}

TEST_CASE("effective sample size") {
  Rng rng(1);
  std::vector<double> iid(20000), ar(20000);
  const double phi = 0.8;
  double prev = 0.0;
  for (std::size_t t = 0; t < iid.size(); ++t) {
    iid[t] = dist::normal(rng);
    prev = phi * prev + dist::normal(rng);
    ar[t] = prev;
  }
  CHECK(effective_sample_size(iid) == doctest::Approx(20000).epsilon(0.1));
  CHECK(effective_sample_size(ar) == doctest::Approx(20000 * (1 - phi) / (1 + phi)).epsilon(0.2));
  CHECK(effective_sample_size(std::vector<double>(50, 2.0)) == 50.0);
  const auto acf = autocorrelation(ar, 3);
  CHECK(acf[0] == doctest::Approx(phi).epsilon(0.03));
  CHECK(acf[1] == doctest::Approx(phi * phi).epsilon(0.05));
}

TEST_CASE("adjusted Rand index") {
  const std::vector<int> a = {0, 0, 1, 1}, b = {0, 0, 1, 2}, c = {5, 5, 7, 7};
  CHECK(adjusted_rand_index(a, c) == 1.0);
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(4.0 / 7.0));
  const std::vector<int> x = {0, 1, 0, 1}, y = {0, 0, 1, 1};
  CHECK(adjusted_rand_index(x, y) == doctest::Approx(-0.5));
}

TEST_CASE("hungarian assignment against brute force") {
  Rng rng(4);
  for (int t = 0; t < 40; ++t) {
    const int rows = 1 + static_cast<int>(rng() % 4);
    const int cols = rows + static_cast<int>(rng() % 3);
    Eigen::MatrixXd cost = Eigen::MatrixXd::Random(rows, cols);
    const auto got = hungarian(cost);
    double got_cost = 0.0;
    for (int i = 0; i < rows; ++i) got_cost += cost(i, got[static_cast<std::size_t>(i)]);
    std::vector<int> perm(static_cast<std::size_t>(cols));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double c = 0.0;
      for (int i = 0; i < rows; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got_cost == doctest::Approx(best).epsilon(1e-12));
    auto used = got;
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  }
}

TEST_CASE("cluster matching") {
  const std::vector<int> truth = {0, 0, 0, 1, 1, 2, 2};
  const std::vector<int> draw = {1, 1, 1, 0, 0, 2, 3};
  CHECK(match_clusters(draw, truth) == std::vector<int>{1, 0, 2});
  const std::vector<int> merged = {0, 0, 0, 1, 1, 1, 1};
  CHECK_THROWS_AS(match_clusters(merged, truth), Error);
  CHECK(match_clusters_or_majority(merged, truth) == std::vector<int>{0, 1, 1});
}

TEST_CASE("chain summaries") {
  ChainOutput chain;
  chain.draws.push_back(draw_with({0, 0, 1}, 1.0, 0.5));
  chain.draws.push_back(draw_with({0, 0, 1}, 2.0, 1.5));
  chain.draws.push_back(draw_with({0, 1, 2}, 3.0, 1.0));
  chain.draws.push_back(draw_with({0, 0, 0}, 4.0, 1.0));
  const auto pi = coclustering_matrix(chain);
  CHECK(pi(0, 1) == 0.75);
  CHECK(pi(1, 2) == 0.25);
  CHECK(pi.diagonal().isOnes());
  const auto counts = cluster_count_posterior(chain);
  CHECK(counts.at(2) == 0.5);
  CHECK(counts.at(1) == 0.25);
  CHECK(least_squares_clustering(chain) == std::vector<int>{0, 0, 1});
  const auto series = scalar_series(chain);
  CHECK(series.at("sigma_eps2") == std::vector<double>{1, 2, 3, 4});
  CHECK(series.count("rho_1_2") == 1);
  const auto rows = credible_intervals(chain, 0.5);
  const auto s2 = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.name == "sigma_eps2"; });
  REQUIRE(s2 != rows.end());
  CHECK(s2->mean == 2.5);
  CHECK(s2->lower == 1.75);
  CHECK(s2->upper == 3.25);

  std::ostringstream trace, acf, summary;
  write_trace_csv(trace, chain);
  CHECK(trace.str().rfind("draw,iteration,", 0) == 0);
  const std::string t = trace.str();
  CHECK(std::count(t.begin(), t.end(), '\n') == 5);
  write_acf_csv(acf, chain, 2);
  write_summary_csv(summary, rows);
  CHECK(summary.str().find("sigma_eps2,2.5") != std::string::npos);
  const auto j = summary_json(chain, 0.9);
  CHECK(j["draws"] == 4);
  CHECK_THROWS_AS(coclustering_matrix(ChainOutput{}), Error);
}

TEST_CASE("beta against truth and combination-effect error") {
  GroundTruth truth;
  truth.labels = {0, 0, 1};
  truth.clusters = {{Eigen::MatrixXd::Constant(1, 1, 0.0), Eigen::MatrixXd::Constant(1, 1, 1.0)},
                    {Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::MatrixXd::Constant(1, 1, 2.0)}};
  ChainOutput chain;
  // Labels are swapped relative to the truth; matching must undo that.
  for (double shift : {-0.1, 0.1}) {
    Draw d = draw_with({1, 1, 0}, 1.0, 1.0);
    d.clusters[0] = {Eigen::MatrixXd::Constant(1, 1, 1.0 + shift), Eigen::MatrixXd::Constant(1, 1, 2.0)};
    d.clusters[1] = {Eigen::MatrixXd::Constant(1, 1, 0.0 + shift), Eigen::MatrixXd::Constant(1, 1, 1.0 + shift)};
    chain.draws.push_back(d);
  }
  const auto e = beta_vs_truth(chain, truth, 0.95);
  REQUIRE(e.size() == 2);
  CHECK(e[0].mse == doctest::Approx(0.01));
  CHECK(e[1].mse == doctest::Approx(0.01));
  CHECK(e[0].covered);

  const Eigen::MatrixXd h = (Eigen::MatrixXd(4, 1) << 1.0, 2.0, 0.5, 1.0).finished();
  const std::vector<std::size_t> visits = {1, 2, 1};
  // Individuals 0 and 1 have gamma off by +-0.1; individual 2 is exact.
  const double want = (0.01 * 1.0 + 0.01 * 4.0 + 0.01 * 0.25 + 0.0) / 4.0;
  CHECK(combination_effect_mse(chain, h, truth, h, visits) == doctest::Approx(want));
}

TEST_CASE("Geweke test runs on a short chain") {
  GewekeConfig cfg;
  cfg.iterations = 2000;
  cfg.marginal_draws = 2000;
  const auto r = geweke_joint_test(cfg);
  CHECK(!r.inconclusive);
  CHECK(r.moments.size() == 8);
  CHECK(!r.flagged());
  cfg.iterations = 0;
  CHECK(geweke_joint_test(cfg).inconclusive);
}

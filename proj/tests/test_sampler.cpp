#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"
#include "drugcomb/sampler.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace drugcomb;
using namespace fixtures;

TEST_CASE("sampler config JSON") {
  McmcConfig c;
  c.n_iter = 300;
  c.burn_in = 100;
  c.thin = 4;
  c.baseline_mode = BaselineMode::DpLinear;
  c.match_mode = MatchMode::ClassRelaxed;
  c.updates.omega = false;
  const auto back = mcmc_config_from_json(to_json(c));
  CHECK(to_json(back).dump() == to_json(c).dump());
  CHECK(back.expected_draws() == 50);
  CHECK_THROWS_AS(mcmc_config_from_json(nlohmann::json{{"n_iterations", 5}}), Error);
  McmcConfig bad;
  bad.burn_in = bad.n_iter;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(parse_baseline_mode("normal_linear") == BaselineMode::NormalLinear);
  CHECK_THROWS_AS(parse_baseline_mode("nope"), Error);
}

TEST_CASE("cluster parameter update matches the conjugate posterior") {
  Rng rng(17);
  const int q = 2, s = 2, d = 2;
  auto fx = make_data(rng, q, s, d, 3, {0, 0, 0, 0, 0}, 0.7);
  const double s2 = 0.6;
  McmcConfig cfg;
  cfg.updates = only(false, true);
  const Eigen::MatrixXd sim = Eigen::MatrixXd::Ones(5, 5);
  const GibbsSampler sampler(fx.data, sim, Hyperparams::defaults(s, d), cfg);
  const auto priors = fixed_priors(q, s, d);
  auto st = manual_state(fx.data, Partition::single_cluster(5), priors, s2, rng, sampler);

  // Stacked regression per item with beta and gamma jointly Gaussian.
  const Eigen::Index visits = 15;
  Eigen::MatrixXd z(visits, s + d);
  Eigen::MatrixXd y(q, visits);
  Eigen::Index c = 0;
  for (const auto& b : fx.raw) {
    z.block(c, 0, 3, s) = b.x.transpose();
    z.block(c, s, 3, d) = b.h.transpose();
    y.middleCols(c, 3) = b.y;
    c += 3;
  }
  const int iters = 20000;
  std::vector<std::vector<double>> trace(static_cast<std::size_t>(q * (s + d)));
  AcceptanceCounter a, b;
  for (int it = 1; it <= iters; ++it) {
    sampler.sweep(st, rng, it, a, b);
    for (int k = 0; k < q; ++k)
      for (int j = 0; j < s + d; ++j)
        trace[static_cast<std::size_t>(k * (s + d) + j)].push_back(j < s ? st.clusters[0].beta(k, j)
                                                                          : st.clusters[0].gamma(k, j - s));
  }
  for (int k = 0; k < q; ++k) {
    Eigen::MatrixXd prior_cov = Eigen::MatrixXd::Zero(s + d, s + d);
    prior_cov.topLeftCorner(s, s) = priors.b[static_cast<std::size_t>(k)];
    prior_cov.bottomRightCorner(d, d) = priors.lambda[static_cast<std::size_t>(k)];
    Eigen::VectorXd prior_mean(s + d);
    prior_mean << priors.e[static_cast<std::size_t>(k)], priors.f[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd prec = prior_cov.inverse() + z.transpose() * z / s2;
    const Eigen::MatrixXd post_cov = prec.inverse();
    const Eigen::VectorXd post_mean = post_cov * (prior_cov.inverse() * prior_mean + z.transpose() * y.row(k).transpose() / s2);
    for (int j = 0; j < s + d; ++j) {
      const auto& tr = trace[static_cast<std::size_t>(k * (s + d) + j)];
      const double m = std::accumulate(tr.begin(), tr.end(), 0.0) / iters;
      double v = 0.0;
      for (double x : tr) v += (x - m) * (x - m);
      v /= iters - 1;
      CHECK(std::abs(m - post_mean(j)) < 4.0 * batch_se(tr, 50));
      CHECK(v == doctest::Approx(post_cov(j, j)).epsilon(0.08));
    }
  }
}

TEST_CASE("partition posterior on four individuals matches enumeration") {
  Rng rng(23);
  const int q = 2, s = 2, d = 1;
  auto fx = make_data(rng, q, s, d, 2, {0, 0, 1, 1}, 0.8);
  const double s2 = 0.5;
  McmcConfig cfg;
  cfg.updates = only(true, true);
  const Eigen::MatrixXd sim = Eigen::MatrixXd::Constant(4, 4, 1.0);
  const GibbsSampler sampler(fx.data, sim, Hyperparams::defaults(s, d), cfg);
  const auto priors = fixed_priors(q, s, d);
  auto st = manual_state(fx.data, Partition::singletons(4), priors, s2, rng, sampler);

  std::map<std::vector<int>, double> exact;
  double z = 0.0;
  for (const auto& l : oracle::set_partitions(4)) {
    double lp = oracle::ewens_log_pmf(l, st.m0);
    const auto sizes = oracle::block_sizes(l);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      std::vector<const oracle::Block*> members;
      for (std::size_t i = 0; i < 4; ++i)
        if (l[i] == static_cast<int>(k)) members.push_back(&fx.raw[i]);
      lp += oracle::cluster_log_marginal(members, priors.e, priors.b, priors.f, priors.lambda, s2);
    }
    exact[l] = std::exp(lp);
    z += exact[l];
  }
  for (auto& [_, p] : exact) p /= z;

  const int iters = 40000;
  std::map<std::vector<int>, std::vector<double>> ind;
  for (const auto& [l, _] : exact) ind[l].reserve(iters);
  AcceptanceCounter a, b;
  for (int it = 1; it <= iters; ++it) {
    sampler.sweep(st, rng, it, a, b);
    const auto cur = canonical_labels(st.partition.labels());
    for (auto& [l, v] : ind) v.push_back(l == cur ? 1.0 : 0.0);
  }
  for (const auto& [l, p] : exact) {
    const auto& v = ind[l];
    const double freq = std::accumulate(v.begin(), v.end(), 0.0) / iters;
    CHECK(std::abs(freq - p) < 4.0 * batch_se(v, 50) + 1e-3);
  }
}

TEST_CASE("Sigma_omega updates keep a unit diagonal") {
  Rng rng(9);
  auto fx = make_data(rng, 3, 2, 1, 3, {0, 1, 0, 1}, 1.0);
  McmcConfig cfg;
  cfg.sigma_omega_step = 0.2;
  const GibbsSampler sampler(fx.data, Eigen::MatrixXd::Ones(4, 4), Hyperparams::defaults(2, 1), cfg);
  auto st = sampler.initial_state(rng);
  st.noise.omega = Eigen::MatrixXd::Random(3, 12);
  int accepted = 0;
  for (int i = 0; i < 20000; ++i) accepted += sampler.update_sigma_omega(st, rng);
  CHECK(accepted > 0);
  CHECK(st.noise.sigma_omega.diagonal().isOnes(0.0));
  CHECK(is_correlation_matrix(st.noise.sigma_omega));

  // Log target written out directly.
  Eigen::MatrixXd corr(3, 3);
  corr << 1, 0.2, -0.1, 0.2, 1, 0.3, -0.1, 0.3, 1;
  const Eigen::MatrixXd w = st.noise.omega * st.noise.omega.transpose();
  const double n = 12.0, s2 = 0.8;
  const double want = std::log(corr.determinant()) - 0.5 * n * std::log(corr.determinant()) -
                      (corr.inverse() * w).trace() / (2.0 * s2);
  CHECK(sampler.sigma_omega_log_target(corr, w, s2) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("run_chain: draw count, determinism and chain files") {
  Rng rng(31);
  auto fx = make_data(rng, 2, 2, 2, 3, {0, 0, 1, 1, 2, 2}, 0.5);
  McmcConfig cfg;
  cfg.n_iter = 120;
  cfg.burn_in = 20;
  cfg.thin = 5;
  cfg.seed = 99;
  Eigen::MatrixXd sim = Eigen::MatrixXd::Random(6, 6).cwiseAbs();
  sim = 0.5 * (sim + sim.transpose()).eval();
  const GibbsSampler sampler(fx.data, sim, Hyperparams::defaults(2, 2), cfg);
  const auto c1 = run_chain(sampler);
  const auto c2 = run_chain(sampler);
  REQUIRE(c1.draws.size() == 20);
  for (std::size_t k = 0; k < c1.draws.size(); ++k) CHECK(to_json(c1.draws[k]).dump() == to_json(c2.draws[k]).dump());
  CHECK(c1.draws.front().iteration == 25);

  const auto dir = std::filesystem::temp_directory_path() / "drugcomb_chain_test";
  std::filesystem::remove_all(dir);
  write_chain(c1, dir, nlohmann::json{{"individual_ids", {"a", "b", "c", "d", "e", "f"}}});
  const auto back = read_chain(dir);
  REQUIRE(back.draws.size() == c1.draws.size());
  for (std::size_t k = 0; k < c1.draws.size(); ++k) CHECK(to_json(back.draws[k]).dump() == to_json(c1.draws[k]).dump());
  CHECK(to_json(back.config).dump() == to_json(c1.config).dump());
  CHECK(back.permutation.accepted == c1.permutation.accepted);
  std::filesystem::remove_all(dir);
}

TEST_CASE("normal_linear keeps every individual in its own cluster") {
  Rng rng(3);
  auto fx = make_data(rng, 2, 2, 1, 3, {0, 0, 0, 1, 1}, 0.5);
  McmcConfig cfg;
  cfg.n_iter = 60;
  cfg.burn_in = 10;
  cfg.thin = 5;
  cfg.baseline_mode = BaselineMode::NormalLinear;
  const GibbsSampler sampler(fx.data, Eigen::MatrixXd::Ones(5, 5), Hyperparams::defaults(2, 1), cfg);
  for (const auto& d : run_chain(sampler).draws) CHECK(d.num_clusters() == 5);
}

TEST_CASE("every sweep keeps the state valid") {
  Rng rng(41);
  auto fx = make_data(rng, 3, 3, 2, 4, {0, 1, 2, 0, 1, 2, 0, 1}, 0.6);
  McmcConfig cfg;
  cfg.shuffle_size = 4;
  Eigen::MatrixXd sim = Eigen::MatrixXd::Random(8, 8).cwiseAbs();
  sim = (sim + sim.transpose()).eval();
  const GibbsSampler sampler(fx.data, sim, Hyperparams::defaults(3, 2), cfg);
  auto st = sampler.initial_state(rng);
  AcceptanceCounter a, b;
  for (int it = 1; it <= 300; ++it) {
    sampler.sweep(st, rng, it, a, b);
    REQUIRE(st.partition.valid());
    REQUIRE(st.clusters.size() == static_cast<std::size_t>(st.partition.num_clusters()));
    REQUIRE(std::isfinite(log_likelihood(fx.data, st.partition, st.clusters, st.noise)));
    REQUIRE(st.m0 > 0.0);
    REQUIRE(st.noise.sigma_eps2 > 0.0);
    auto sorted = st.sigma;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 8; ++i) REQUIRE(sorted[static_cast<std::size_t>(i)] == i);
  }
  CHECK(a.proposed == 300);
}

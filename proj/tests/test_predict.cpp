#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"
#include "drugcomb/predict.hpp"
#include "drugcomb/server.hpp"
#include "drugcomb/simulate.hpp"

// After the Eigen headers: resolv.h, pulled in here, defines a _res macro.
#include <httplib.h>

using namespace drugcomb;
using nlohmann::json;

namespace {

const FittedModel& base_model() {
  static const FittedModel m = [] {
    const auto dict = DrugDictionary::standard();
    SimConfig cfg;
    cfg.n = 12;
    cfg.max_len = 8;
    cfg.rep_threshold = 2;
    cfg.seed = 3;
    const auto sim = generate_dataset(cfg, dict);
    FitOptions opts;
    opts.rep_threshold = 2;
    opts.mcmc.n_iter = 200;
    opts.mcmc.burn_in = 100;
    opts.mcmc.thin = 10;
    return make_fitted_model(fit(sim.data, dict, opts), sim.data, dict);
  }();
  return m;
}

FittedModel with_draws(const FittedModel& m, std::size_t keep, std::size_t copies) {
  FittedModel out = m;
  out.chain.draws.assign(copies, m.chain.draws[keep]);
  return out;
}

Scenario scenario_for(const FittedModel& m, NoiseInclusion noise) {
  Scenario sc;
  sc.individual_id = m.individual_ids[0];
  sc.covariates = Eigen::VectorXd::Constant(m.s, 0.5);
  sc.covariates(0) = 1.0;
  sc.candidate = parse_regimen("TDF+FTC+EFV", m.dict);
  sc.noise = noise;
  return sc;
}

}  // namespace

TEST_CASE("mean-only prediction for a training individual is beta x + gamma h") {
  const auto m = with_draws(base_model(), 0, 1);
  const auto sc = scenario_for(m, NoiseInclusion::MeanOnly);
  Rng rng(1);
  const auto p = predict_scenario(m, sc, 0.95, rng);
  const auto& c = m.chain.draws[0].params_of(0);
  const Eigen::VectorXd h = reduce_regimen(m.basis, sc.candidate, m.dict);
  const Eigen::VectorXd want = c.beta * sc.covariates + c.gamma * h;
  REQUIRE(p.mean.size() == m.q);
  for (int k = 0; k < m.q; ++k) {
    CHECK(p.mean(k) == doctest::Approx(want(k)).epsilon(1e-12));
    CHECK(p.lower(k) == doctest::Approx(want(k)).epsilon(1e-12));
    CHECK(p.upper(k) == doctest::Approx(want(k)).epsilon(1e-12));
  }

  auto zero = m;
  for (auto& cl : zero.chain.draws[0].clusters) cl.gamma.setZero();
  const auto pz = predict_scenario(zero, sc, 0.95, rng);
  CHECK((pz.mean - c.beta * sc.covariates).norm() < 1e-12);
}

TEST_CASE("noise bands scale with the residual variance") {
  auto m = with_draws(base_model(), 0, 2000);
  const auto sc = scenario_for(m, NoiseInclusion::WithOmegaEps);
  Rng a(5);
  const auto p1 = predict_scenario(m, sc, 0.9, a);
  for (auto& d : m.chain.draws) d.sigma_eps2 *= 2.0;
  Rng b(5);
  const auto p2 = predict_scenario(m, sc, 0.9, b);
  for (int k = 0; k < m.q; ++k) {
    const double w1 = p1.upper(k) - p1.lower(k), w2 = p2.upper(k) - p2.lower(k);
    CHECK(w1 > 0.0);
    CHECK(w2 / w1 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
  }
  // The predictive variance is sigma2 (Sigma_omega + I) around the mean.
  const Eigen::MatrixXd dr = [&] {
    Rng c(6);
    return predictive_draws(m, sc, c);
  }();
  const auto& d0 = m.chain.draws[0];
  const Eigen::VectorXd mean = dr.rowwise().mean();
  const Eigen::MatrixXd centered = dr.colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(dr.cols() - 1);
  const Eigen::MatrixXd want = d0.sigma_eps2 * (d0.sigma_omega + Eigen::MatrixXd::Identity(m.q, m.q));
  for (int k = 0; k < m.q; ++k) CHECK(cov(k, k) == doctest::Approx(want(k, k)).epsilon(0.15));
}

TEST_CASE("predictions are deterministic and bands nest") {
  const auto& m = base_model();
  auto sc = scenario_for(m, NoiseInclusion::WithOmegaEps);
  sc.individual_id.reset();
  sc.history = {parse_regimen("AZT+LAM+NVP", m.dict), parse_regimen("TDF+FTC+EFV", m.dict)};
  Rng a(9), b(9);
  const auto p = predict_scenario(m, sc, 0.95, a);
  const auto q = predict_scenario(m, sc, 0.95, b);
  CHECK(to_json(p).dump() == to_json(q).dump());
  Rng c(9);
  const auto narrow = predict_scenario(m, sc, 0.5, c);
  for (int k = 0; k < m.q; ++k) {
    CHECK(p.lower(k) <= narrow.lower(k));
    CHECK(narrow.upper(k) <= p.upper(k));
    CHECK(p.lower(k) <= p.mean(k));
    CHECK(p.mean(k) <= p.upper(k));
  }
  sc.individual_id = "nobody";
  sc.history.clear();
  Rng d(1);
  CHECK_THROWS_AS(predict_scenario(m, sc, 0.95, d), Error);
}

TEST_CASE("scenario JSON parsing") {
  const auto& m = base_model();
  const json ok = {{"individual_id", m.individual_ids[1]}, {"covariates", std::vector<double>(m.s - 1, 0.2)},
                   {"candidate", {"TDF", "FTC", "EFV"}}, {"noise", "mean_only"}};
  const auto sc = scenario_from_json(ok, m);
  CHECK(sc.covariates.size() == m.s);
  CHECK(sc.covariates(0) == 1.0);
  CHECK(sc.noise == NoiseInclusion::MeanOnly);
  CHECK(sc.candidate.size() == 3);
  auto extra = ok;
  extra["bogus"] = 1;
  CHECK_THROWS_AS(scenario_from_json(extra, m), Error);
  auto wrong = ok;
  wrong["covariates"] = {1.0};
  if (m.s > 2) CHECK_THROWS_AS(scenario_from_json(wrong, m), Error);
}

TEST_CASE("model directory round trip") {
  const auto& m = base_model();
  const auto dir = std::filesystem::temp_directory_path() / "drugcomb_predict_roundtrip";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  m.save(dir);
  const auto back = FittedModel::load(dir);
  CHECK(back.individual_ids == m.individual_ids);
  CHECK(back.item_names == m.item_names);
  CHECK(back.basis.d_star() == m.basis.d_star());
  CHECK(back.chain.draws.size() == m.chain.draws.size());
  auto sc = scenario_for(m, NoiseInclusion::WithOmegaEps);
  Rng a(2), b(2);
  const auto p = predict_scenario(m, sc, 0.95, a), q = predict_scenario(back, sc, 0.95, b);
  CHECK((p.mean - q.mean).norm() < 1e-9);
  CHECK((p.upper - q.upper).norm() < 1e-9);
  std::filesystem::remove_all(dir);
}

TEST_CASE("HTTP endpoints") {
  const auto& m = base_model();
  httplib::Server server;
  configure_routes(server, m);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  const auto meta = cli.Get("/api/meta");
  REQUIRE(meta);
  CHECK(meta->status == 200);
  const auto mj = json::parse(meta->body);
  CHECK(mj["q"] == m.q);
  CHECK(mj["d_star"] == m.basis.d_star());

  const auto regs = cli.Get("/api/regimens");
  REQUIRE(regs);
  CHECK(regs->status == 200);
  CHECK(json::parse(regs->body)["drugs"].size() == m.dict.entries().size());

  json req = {{"individual_id", m.individual_ids[0]}, {"covariates", std::vector<double>(m.s, 1.0)},
              {"candidate", "TDF+FTC+EFV"}, {"seed", 4}};
  const auto ok = cli.Post("/api/predict", req.dump(), "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  const auto again = cli.Post("/api/predict", req.dump(), "application/json");
  REQUIRE(again);
  CHECK(again->body == ok->body);
  const auto pj = json::parse(ok->body);
  CHECK(pj["items"].size() == static_cast<std::size_t>(m.q));
  CHECK(pj["draws"] == m.chain.draws.size());

  const auto bad = cli.Post("/api/predict", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto dims = req;
  dims["covariates"] = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const auto bad_dims = cli.Post("/api/predict", dims.dump(), "application/json");
  REQUIRE(bad_dims);
  CHECK(bad_dims->status == 400);

  auto unknown = req;
  unknown["candidate"] = "TDF+QQQ";
  const auto u = cli.Post("/api/predict", unknown.dump(), "application/json");
  REQUIRE(u);
  CHECK(u->status == 422);
  CHECK(u->body.find("QQQ") != std::string::npos);
  auto nobody = req;
  nobody["individual_id"] = "nobody";
  const auto nb = cli.Post("/api/predict", nobody.dump(), "application/json");
  REQUIRE(nb);
  CHECK(nb->status == 422);

  server.stop();
  th.join();
}

#pragma once

// Small sampler fixtures shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "drugcomb/sampler.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace drugcomb;

struct Fixture {
  std::vector<oracle::Block> raw;
  ModelData data;
};

// Individuals in `groups` share a true coefficient set, so the posterior
// over partitions is informative.
inline Fixture make_data(Rng& rng, int q, int s, int d, int visits, const std::vector<int>& groups, double noise) {
  std::vector<Eigen::MatrixXd> betas, gammas;
  for (int g = 0; g <= *std::max_element(groups.begin(), groups.end()); ++g) {
    betas.push_back(2.0 * Eigen::MatrixXd::Random(q, s));
    gammas.push_back(Eigen::MatrixXd::Random(q, d));
  }
  std::vector<oracle::Block> raw;
  std::vector<IndividualBlock> blocks;
  for (int g : groups) {
    oracle::Block b;
    b.x = Eigen::MatrixXd::Random(s, visits);
    b.x.row(0).setOnes();
    b.h = Eigen::MatrixXd::Random(d, visits);
    b.y = betas[static_cast<std::size_t>(g)] * b.x + gammas[static_cast<std::size_t>(g)] * b.h;
    for (Eigen::Index k = 0; k < b.y.size(); ++k) b.y.data()[k] += noise * dist::normal(rng);
    raw.push_back(b);
    IndividualBlock ib;
    ib.y = b.y;
    ib.x = b.x;
    ib.h = b.h;
    blocks.push_back(std::move(ib));
  }
  return {raw, ModelData(q, s, d, std::move(blocks))};
}

inline LatentPriors fixed_priors(int q, int s, int d) {
  LatentPriors p;
  for (int k = 0; k < q; ++k) {
    p.e.push_back(Eigen::VectorXd::Constant(s, 0.2 * (k + 1)));
    p.b.push_back(0.8 * Eigen::MatrixXd::Identity(s, s));
    p.f.push_back(Eigen::VectorXd::Constant(d, -0.1 * (k + 1)));
    p.lambda.push_back(0.5 * Eigen::MatrixXd::Identity(d, d));
  }
  return p;
}

inline McmcState manual_state(const ModelData& data, Partition part, const LatentPriors& priors, double s2, Rng& rng,
                       const GibbsSampler& sampler) {
  McmcState st;
  st.partition = std::move(part);
  st.priors = priors;
  for (int k = 0; k < st.partition.num_clusters(); ++k) st.clusters.push_back(sampler.draw_from_base(priors, rng));
  st.noise.omega = Eigen::MatrixXd::Zero(data.q(), static_cast<Eigen::Index>(data.total_visits()));
  st.noise.sigma_omega = Eigen::MatrixXd::Identity(data.q(), data.q());
  st.noise.sigma_eps2 = s2;
  st.sigma.resize(data.n());
  std::iota(st.sigma.begin(), st.sigma.end(), 0);
  st.m0 = 1.0;
  return st;
}

inline UpdateFlags only(bool partition, bool cluster_params) {
  UpdateFlags u;
  u.partition = partition;
  u.cluster_params = cluster_params;
  u.mass = u.permutation = u.hyperparams = u.omega = u.sigma_omega = u.sigma_eps = false;
  return u;
}

inline double batch_se(const std::vector<double>& x, int batches) {
  const auto len = x.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b)
    means.push_back(std::accumulate(x.begin() + b * len, x.begin() + (b + 1) * len, 0.0) / len);
  const double m = std::accumulate(means.begin(), means.end(), 0.0) / batches;
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  return std::sqrt(ss / (batches - 1) / batches);
}

}  // namespace fixtures

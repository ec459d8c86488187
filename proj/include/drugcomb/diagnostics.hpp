#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "drugcomb/model.hpp"
#include "drugcomb/sampler.hpp"
#include "drugcomb/simulate.hpp"

namespace drugcomb {

// ---------------------------------------------------------------------------
// Scalar summaries

// Linear-interpolation (type 7) empirical quantile.
double quantile(std::vector<double> values, double p);

std::vector<double> autocorrelation(std::span<const double> x, int max_lag);

// Geyer's initial monotone sequence estimator; never exceeds the draw count.
double effective_sample_size(std::span<const double> x);

struct ScalarSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  double ess = 0.0;
  std::vector<double> acf;  // lags 1..max_lag
};

ScalarSummary summarize(std::string name, std::span<const double> draws, double level, int max_lag = 10);

// Label-free scalar series of a chain: sigma_eps2, m0, r_n and the
// Sigma_omega off-diagonals (rho_a_b).
std::map<std::string, std::vector<double>> scalar_series(const ChainOutput& chain);

std::vector<ScalarSummary> credible_intervals(const ChainOutput& chain, double level);

// ---------------------------------------------------------------------------
// Clustering summaries

Eigen::MatrixXd coclustering_matrix(const ChainOutput& chain);
std::map<int, double> cluster_count_posterior(const ChainOutput& chain);

// The stored partition closest in squared distance to the co-clustering matrix.
std::vector<int> least_squares_clustering(const ChainOutput& chain);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// Minimum-cost assignment of rows to distinct columns; rows <= cols.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

// For every truth cluster, the draw cluster it corresponds to. Uses the
// maximum-overlap bijective matching when the draw has at least as many
// clusters as the truth, and throws LabelMatchFailure otherwise.
std::vector<int> match_clusters(std::span<const int> draw_labels, std::span<const int> truth_labels);

// Same, but falls back to the draw cluster holding most members of each
// truth cluster when no bijection exists.
std::vector<int> match_clusters_or_majority(std::span<const int> draw_labels, std::span<const int> truth_labels);

// ---------------------------------------------------------------------------
// Truth comparisons

struct EntryError {
  int cluster = 0;
  int item = 0;
  int column = 0;
  double truth = 0.0;
  double mse = 0.0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
};

// Per-entry MSE and equal-tailed interval coverage of beta against the truth,
// after matching draw clusters to truth clusters in every draw.
std::vector<EntryError> beta_vs_truth(const ChainOutput& chain, const GroundTruth& truth, double level = 0.95);

// Mean over draws, visits and items of the squared error of the fitted
// combination effect gamma_i h_ij against the true one. Feature rows are in
// individual-major visit order; `visits_per_individual` maps rows to people.
double combination_effect_mse(const ChainOutput& chain, const Eigen::MatrixXd& fitted_features,
                              const GroundTruth& truth, const Eigen::MatrixXd& true_features,
                              std::span<const std::size_t> visits_per_individual);

// ---------------------------------------------------------------------------
// Export

void write_trace_csv(std::ostream& out, const ChainOutput& chain);
void write_acf_csv(std::ostream& out, const ChainOutput& chain, int max_lag);
void write_summary_csv(std::ostream& out, std::span<const ScalarSummary> rows);
nlohmann::json summary_json(const ChainOutput& chain, double level);

// ---------------------------------------------------------------------------
// Joint-distribution test of the sampler

struct GewekeConfig {
  int n = 8;
  int visits = 2;
  int q = 2;
  int s = 2;
  int d_star = 2;
  int iterations = 20000;
  int marginal_draws = 20000;
  int batches = 50;
  SigmaEpsMode sigma_eps_mode = SigmaEpsMode::Consistent;
  double sigma_omega_step = 0.3;
  std::uint64_t seed = 7;
};

// Proper, moderately tight priors so every tracked second moment is finite.
Hyperparams geweke_hyperparams(int s, int d_star);

struct GewekeMoment {
  std::string name;
  double marginal_mean = 0.0;
  double marginal_se = 0.0;
  double successive_mean = 0.0;
  double successive_se = 0.0;
  double z = 0.0;
};

struct GewekeReport {
  std::vector<GewekeMoment> moments;
  bool inconclusive = false;

  double fraction_within(double z) const;
  bool flagged(double z = 4.0) const;
};

GewekeReport geweke_joint_test(const GewekeConfig& cfg);

}  // namespace drugcomb

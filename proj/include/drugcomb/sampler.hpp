#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "drugcomb/distributions.hpp"
#include "drugcomb/model.hpp"
#include "drugcomb/regimen_kernel.hpp"

namespace drugcomb {

enum class SigmaEpsMode { Paper, Consistent };
enum class BaselineMode { DdcrpSt, DpLinear, NormalLinear };

std::string_view to_string(SigmaEpsMode m);
std::string_view to_string(BaselineMode m);
SigmaEpsMode parse_sigma_eps_mode(std::string_view text);
BaselineMode parse_baseline_mode(std::string_view text);

// Individual blocks of the sweep can be frozen at their current values.
// Used by the correctness tests; all on for real fits.
struct UpdateFlags {
  bool partition = true;
  bool mass = true;
  bool permutation = true;
  bool cluster_params = true;
  bool hyperparams = true;
  bool omega = true;
  bool sigma_omega = true;
  bool sigma_eps = true;
};

struct McmcConfig {
  int n_iter = 10000;
  int burn_in = 5000;
  int thin = 10;
  std::uint64_t seed = 1;
  int shuffle_size = 3;
  double sigma_omega_step = 0.05;
  int sigma_omega_proposals = 1;  // proposals per iteration
  int permutation_interval = 1;   // refresh sigma every k-th iteration
  SigmaEpsMode sigma_eps_mode = SigmaEpsMode::Consistent;
  double eta = 0.5;
  MatchMode match_mode = MatchMode::Strict;
  BaselineMode baseline_mode = BaselineMode::DdcrpSt;
  UpdateFlags updates;

  void validate() const;
  int expected_draws() const { return (n_iter - burn_in) / thin; }
};

nlohmann::json to_json(const McmcConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
McmcConfig mcmc_config_from_json(const nlohmann::json& j);

struct McmcState {
  Partition partition;
  std::vector<ClusterParams> clusters;  // indexed by partition label
  NoiseState noise;
  std::vector<int> sigma;  // sigma[t] = individual at position t
  double m0 = 1.0;
  double tau0 = 0.5;
  LatentPriors priors;
};

struct Draw {
  int iteration = 0;
  std::vector<int> labels;              // canonical
  std::vector<ClusterParams> clusters;  // in canonical label order
  Eigen::MatrixXd sigma_omega;
  double sigma_eps2 = 1.0;
  double m0 = 1.0;
  std::vector<int> sigma;
  LatentPriors priors;

  int num_clusters() const { return static_cast<int>(clusters.size()); }
  const ClusterParams& params_of(std::size_t individual) const {
    return clusters[static_cast<std::size_t>(labels[individual])];
  }
};

Draw snapshot(const McmcState& state, int iteration);
nlohmann::json to_json(const Draw& d);
Draw draw_from_json(const nlohmann::json& j);

struct AcceptanceCounter {
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

struct ChainOutput {
  McmcConfig config;
  std::vector<Draw> draws;
  AcceptanceCounter permutation;
  AcceptanceCounter sigma_omega;
};

class GibbsSampler {
 public:
  // `similarity` is the n x n history-similarity matrix. dp_linear replaces
  // it by a constant; normal_linear ignores it.
  GibbsSampler(const ModelData& data, const Eigen::MatrixXd& similarity, Hyperparams hyper,
               McmcConfig cfg);

  const ModelData& data() const { return data_; }
  const Hyperparams& hyper() const { return hyper_; }
  const McmcConfig& config() const { return cfg_; }
  const Eigen::MatrixXd& similarity() const { return similarity_; }

  // Singletons (normal_linear) or singletons for the mixture modes, then
  // one pass of the cluster-parameter and hyperparameter updates.
  McmcState initial_state(Rng& rng) const;

  void update_partition(McmcState& s, Rng& rng) const;
  void update_mass(McmcState& s, Rng& rng) const;
  bool update_permutation(McmcState& s, Rng& rng) const;
  void update_cluster_params(McmcState& s, Rng& rng) const;
  void update_hyperparams(McmcState& s, Rng& rng) const;
  void update_omega(McmcState& s, Rng& rng) const;
  bool update_sigma_omega(McmcState& s, Rng& rng) const;
  void update_sigma_eps(McmcState& s, Rng& rng) const;

  // One full iteration in the fixed order partition, mass, permutation,
  // cluster parameters, hyperparameters, omega, Sigma_omega, sigma_eps^2.
  void sweep(McmcState& s, Rng& rng, int iteration, AcceptanceCounter& perm,
             AcceptanceCounter& so) const;

  // Log target of the Sigma_omega move: log det S - N/2 log det S - tr(S^-1 W) / (2 sigma^2).
  double sigma_omega_log_target(const Eigen::MatrixXd& corr, const Eigen::MatrixXd& scatter,
                                double sigma_eps2) const;

  // Draw of cluster parameters from G0 given the latent prior layer.
  ClusterParams draw_from_base(const LatentPriors& priors, Rng& rng) const;

  // Sum of squared residuals y - beta x - gamma h - omega over all visits.
  double residual_sum_squares(const McmcState& s) const;

 private:
  bool mixture() const { return cfg_.baseline_mode != BaselineMode::NormalLinear; }

  const ModelData& data_;
  Eigen::MatrixXd similarity_;
  Hyperparams hyper_;
  McmcConfig cfg_;
  Eigen::MatrixXd e0_prec_, f0_prec_;
};

using ProgressFn = std::function<void(int iteration)>;

ChainOutput run_chain(const GibbsSampler& sampler, const ProgressFn& progress = {});

// Directory with draws.jsonl, meta.json and assignments.csv.
void write_chain(const ChainOutput& chain, const std::filesystem::path& dir,
                 const nlohmann::json& extra_meta);
ChainOutput read_chain(const std::filesystem::path& dir);

}  // namespace drugcomb

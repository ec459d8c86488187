#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "drugcomb/distributions.hpp"
#include "drugcomb/kernel_features.hpp"
#include "drugcomb/model.hpp"
#include "drugcomb/regimen_kernel.hpp"

namespace drugcomb {

struct HistoryOptions {
  int min_len = 2;             // visits per individual, clipped to max_len
  double switch_prob = 0.15;   // chance of a regimen change between visits
  int catalogue_size = 40;     // distinct regimens in circulation
  double popularity_decay = 0.9;  // Zipf-like exponent on catalogue ranks
};

// Synthetic stand-in for sampling observed treatment records: `pool_size`
// visit-level records with lengths uniform in [min_len, max_len]. Regimens
// come from a random catalogue of 1-4 drug combinations, each holding at
// least one NRTI backbone agent.
std::vector<TreatmentRecord> generate_histories(int pool_size, int max_len, const DrugDictionary& dict,
                                                Rng& rng, const HistoryOptions& opts = {});

enum class HistorySource { Synthetic, PoolFile };

struct SimConfig {
  int n = 200;
  int q = 3;
  int s = 3;
  double eta_true = 0.5;
  MatchMode match_mode = MatchMode::Strict;
  HistorySource history_source = HistorySource::Synthetic;
  std::string pool_file;  // history CSV, PoolFile mode
  int pool_size = 0;      // synthetic pool; 0 means n
  int max_len = 38;
  HistoryOptions history;
  int rep_threshold = 10;
  double variance_threshold = 0.999;
  std::vector<double> correlation_offdiag = {0.25, 0.5, 0.75};  // row-major upper triangle
  double sigma_eps2_true = 1.0;
  double m0_true = 1.0;
  int target_clusters = 0;     // resample the prior draw until r matches (0: any)
  int min_cluster_size = 1;
  int max_attempts = 100000;
  std::vector<int> fixed_partition;  // overrides the prior draw when non-empty
  bool table_s1 = false;             // beta truths from the published table (Q=S=r=3)
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j);

struct GroundTruth {
  std::vector<int> labels;
  std::vector<ClusterParams> clusters;
  Eigen::MatrixXd sigma_omega;
  double sigma_eps2 = 1.0;
  double m0 = 1.0;
  std::vector<int> sigma;
  std::vector<RegimenHistory> histories;
  std::vector<std::string> representatives;
  double eta = 0.5;
  MatchMode match_mode = MatchMode::Strict;
  int d_star = 0;

  int num_clusters() const { return static_cast<int>(clusters.size()); }
};

nlohmann::json to_json(const GroundTruth& t);
GroundTruth ground_truth_from_json(const nlohmann::json& j, const DrugDictionary& dict);

struct SimulatedData {
  LongitudinalDataset data;
  GroundTruth truth;
  FeatureBuild features;       // at eta_true with the ST kernel
  Eigen::MatrixXd similarity;  // history similarity at eta_true
};

Eigen::MatrixXd correlation_from_offdiag(int q, const std::vector<double>& upper);

// Published beta truths, clusters x items x covariates.
std::vector<Eigen::MatrixXd> table_s1_beta();

SimulatedData generate_dataset(const SimConfig& cfg, const DrugDictionary& dict);

}  // namespace drugcomb

#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "drugcomb/regimen_kernel.hpp"

namespace drugcomb {

// The similarity used for the kernel smoother: the subset-tree kernel of the
// proposed model or the linear drug-overlap kernel of the baselines.
enum class FeatureKernel { SubsetTree, Linear };

std::string_view to_string(FeatureKernel k);
FeatureKernel parse_feature_kernel(std::string_view text);

struct RepresentativeSet {
  std::vector<Regimen> regimens;  // canonical order, no duplicates
  int min_visit_threshold = 10;

  std::size_t size() const { return regimens.size(); }
};

// Every regimen used in strictly more than `threshold` visits. Visits with no
// ART (nullopt) are ignored.
RepresentativeSet select_representatives(std::span<const std::optional<Regimen>> visits,
                                         int threshold);

struct WeightRow {
  Eigen::VectorXd weights;
  bool fallback = false;  // no similarity to any representative; uniform row
};

// Precomputes representative trees so rows can be produced repeatedly.
class KernelSmoother {
 public:
  KernelSmoother(RepresentativeSet reps, KernelConfig cfg, FeatureKernel kernel,
                 DrugDictionary dict);

  WeightRow row(const Regimen& z) const;

  const RepresentativeSet& representatives() const { return reps_; }
  const KernelConfig& config() const { return cfg_; }
  FeatureKernel kernel() const { return kernel_; }
  const DrugDictionary& dictionary() const { return dict_; }

 private:
  RepresentativeSet reps_;
  KernelConfig cfg_;
  FeatureKernel kernel_;
  DrugDictionary dict_;
  std::vector<RegimenTree> trees_;
};

// Element d is k(z, z_d) / sum_d k(z, z_d) under the subset-tree kernel.
WeightRow kernel_weight_row(const Regimen& z, const RepresentativeSet& reps,
                            const KernelConfig& cfg, const DrugDictionary& dict);

struct KernelWeightMatrix {
  Eigen::MatrixXd rows;                       // N x D
  std::vector<std::size_t> visit_index;       // which input visit each row came from
  std::vector<bool> fallback;
};

// Rows for every visit with a regimen; no-ART visits are skipped.
KernelWeightMatrix build_weight_matrix(std::span<const std::optional<Regimen>> visits,
                                       const KernelSmoother& smoother);

struct PcaBasis {
  Eigen::VectorXd column_means;              // D (zero when not centering)
  Eigen::MatrixXd loadings;                  // D x D*
  Eigen::VectorXd explained_variance_ratio;  // D*
  int d_star = 0;
  double variance_threshold = 0.999;
  double total_variance = 0.0;
  bool centered = true;
  bool degenerate = false;  // all rows identical; D* forced to 1

  Eigen::Index input_dim() const { return column_means.size(); }
};

// Principal components of the weight matrix, keeping the smallest D* whose
// cumulative explained variance reaches the threshold. Each component's
// largest-magnitude loading is made positive.
PcaBasis pca_fit(const Eigen::MatrixXd& h, double variance_threshold, bool center = true);

Eigen::VectorXd pca_project(const PcaBasis& basis, const Eigen::VectorXd& row);
Eigen::VectorXd pca_reconstruct(const PcaBasis& basis, const Eigen::VectorXd& reduced);

// Everything needed to map a regimen to its reduced feature row.
struct FeatureBasis {
  RepresentativeSet representatives;
  KernelConfig kernel_config;
  FeatureKernel kernel = FeatureKernel::SubsetTree;
  PcaBasis pca;

  int d_star() const { return pca.d_star; }
};

struct FeatureBuild {
  FeatureBasis basis;
  Eigen::MatrixXd reduced;          // one row per input visit; zero row for no-ART visits
  KernelWeightMatrix weights;
};

struct FeatureOptions {
  KernelConfig kernel_config;
  FeatureKernel kernel = FeatureKernel::SubsetTree;
  int rep_threshold = 10;
  double variance_threshold = 0.999;
  bool center = true;
};

FeatureBuild build_features(std::span<const std::optional<Regimen>> visits,
                            const FeatureOptions& opts, const DrugDictionary& dict);

// Reduced feature row for an arbitrary regimen; std::nullopt (no ART) maps to
// the zero row.
Eigen::VectorXd reduce_regimen(const FeatureBasis& basis, const std::optional<Regimen>& z,
                               const DrugDictionary& dict);

nlohmann::json to_json(const FeatureBasis& basis);
FeatureBasis feature_basis_from_json(const nlohmann::json& j, const DrugDictionary& dict);

}  // namespace drugcomb

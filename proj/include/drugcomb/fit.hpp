#pragma once

#include <optional>

#include <Eigen/Dense>

#include "drugcomb/kernel_features.hpp"
#include "drugcomb/model.hpp"
#include "drugcomb/sampler.hpp"

namespace drugcomb {

struct FitOptions {
  McmcConfig mcmc;
  int rep_threshold = 10;
  double variance_threshold = 0.999;
  bool center = true;
  bool keep_duplicates = false;       // history episodes
  std::optional<Hyperparams> hyper;   // defaults sized from S and D*
};

struct FitResult {
  FeatureBuild features;
  Eigen::MatrixXd similarity;  // empty unless baseline is ddcrp_st
  Hyperparams hyper;
  ChainOutput chain;
};

// Feature kernel used by each baseline: the ST kernel for ddcrp_st, the
// linear kernel for dp_linear and normal_linear.
FeatureKernel feature_kernel_for(BaselineMode mode);

// Features, history similarity, sampler and chain in one call.
FitResult fit(const LongitudinalDataset& data, const DrugDictionary& dict, const FitOptions& opts,
              const ProgressFn& progress = {});

}  // namespace drugcomb

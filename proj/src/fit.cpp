#include "drugcomb/fit.hpp"

#include "drugcomb/error.hpp"

namespace drugcomb {

FeatureKernel feature_kernel_for(BaselineMode mode) {
  return mode == BaselineMode::DdcrpSt ? FeatureKernel::SubsetTree : FeatureKernel::Linear;
}

FitResult fit(const LongitudinalDataset& data, const DrugDictionary& dict, const FitOptions& opts,
              const ProgressFn& progress) {
  opts.mcmc.validate();
  FitResult out;
  const KernelConfig kcfg{opts.mcmc.eta, opts.mcmc.match_mode};
  const FeatureOptions fopts{kcfg, feature_kernel_for(opts.mcmc.baseline_mode), opts.rep_threshold,
                             opts.variance_threshold, opts.center};
  const auto visits = data.visit_regimens();
  out.features = build_features(visits, fopts, dict);
  const ModelData model = ModelData::assemble(data, out.features.reduced);

  const auto n = static_cast<Eigen::Index>(data.n());
  if (opts.mcmc.baseline_mode == BaselineMode::DdcrpSt) {
    const auto histories = data.histories(opts.keep_duplicates);
    for (const auto& h : histories)
      if (h.episodes.empty()) throw Error(ErrorCode::EmptyHistory, h.owner);
    out.similarity = history_similarity_matrix(histories, kcfg, dict);
  }
  out.hyper = opts.hyper ? *opts.hyper : Hyperparams::defaults(data.s(), model.d_star());
  const Eigen::MatrixXd sim = out.similarity.size() > 0 ? out.similarity : Eigen::MatrixXd::Ones(n, n);
  const GibbsSampler sampler(model, sim, out.hyper, opts.mcmc);
  out.chain = run_chain(sampler, progress);
  return out;
}

}  // namespace drugcomb

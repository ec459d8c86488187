#include "drugcomb/kernel_features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"

namespace drugcomb {

std::string_view to_string(FeatureKernel k) {
  return k == FeatureKernel::SubsetTree ? "subset_tree" : "linear";
}

FeatureKernel parse_feature_kernel(std::string_view text) {
  if (text == "subset_tree") return FeatureKernel::SubsetTree;
  if (text == "linear") return FeatureKernel::Linear;
  throw Error(ErrorCode::InvalidArgument, "feature kernel must be subset_tree or linear");
}

RepresentativeSet select_representatives(std::span<const std::optional<Regimen>> visits,
                                         int threshold) {
  if (visits.empty()) throw Error(ErrorCode::InvalidArgument, "empty visit list");
  std::map<Regimen, int> counts;
  for (const auto& v : visits) {
    if (v) ++counts[*v];
  }
  RepresentativeSet reps{{}, threshold};
  for (const auto& [reg, c] : counts) {
    if (c > threshold) reps.regimens.push_back(reg);
  }
  if (reps.regimens.empty())
    throw Error(ErrorCode::NoRepresentatives,
                "no regimen used in more than " + std::to_string(threshold) + " visits");
  return reps;
}

KernelSmoother::KernelSmoother(RepresentativeSet reps, KernelConfig cfg, FeatureKernel kernel,
                               DrugDictionary dict)
    : reps_(std::move(reps)), cfg_(cfg), kernel_(kernel), dict_(std::move(dict)) {
  cfg_.validate();
  if (reps_.regimens.empty()) throw Error(ErrorCode::NoRepresentatives, "");
  if (kernel_ == FeatureKernel::SubsetTree) {
    for (const auto& r : reps_.regimens) trees_.push_back(build_regimen_tree(r, dict_));
  }
}

WeightRow KernelSmoother::row(const Regimen& z) const {
  const auto d = static_cast<Eigen::Index>(reps_.size());
  WeightRow out{Eigen::VectorXd(d), false};
  if (kernel_ == FeatureKernel::SubsetTree) {
    const auto tz = build_regimen_tree(z, dict_);
    for (Eigen::Index k = 0; k < d; ++k) out.weights[k] = st_kernel(tz, trees_[k], cfg_);
  } else {
    for (Eigen::Index k = 0; k < d; ++k) out.weights[k] = linear_kernel(z, reps_.regimens[k]);
  }
  const double total = out.weights.sum();
  if (total > 0.0) {
    out.weights /= total;
  } else {
    out.weights.setConstant(1.0 / static_cast<double>(d));
    out.fallback = true;
  }
  return out;
}

WeightRow kernel_weight_row(const Regimen& z, const RepresentativeSet& reps,
                            const KernelConfig& cfg, const DrugDictionary& dict) {
  return KernelSmoother(reps, cfg, FeatureKernel::SubsetTree, dict).row(z);
}

KernelWeightMatrix build_weight_matrix(std::span<const std::optional<Regimen>> visits,
                                       const KernelSmoother& smoother) {
  std::map<Regimen, WeightRow> cache;
  KernelWeightMatrix m;
  std::vector<const WeightRow*> rows;
  for (std::size_t v = 0; v < visits.size(); ++v) {
    if (!visits[v]) continue;
    auto it = cache.find(*visits[v]);
    if (it == cache.end()) it = cache.emplace(*visits[v], smoother.row(*visits[v])).first;
    rows.push_back(&it->second);
    m.visit_index.push_back(v);
    m.fallback.push_back(it->second.fallback);
  }
  const auto d = static_cast<Eigen::Index>(smoother.representatives().size());
  m.rows.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) m.rows.row(static_cast<Eigen::Index>(r)) = rows[r]->weights.transpose();
  return m;
}

PcaBasis pca_fit(const Eigen::MatrixXd& h, double variance_threshold, bool center) {
  if (h.rows() < 2) throw Error(ErrorCode::InvalidArgument, "PCA needs at least two rows");
  if (!(variance_threshold > 0.0 && variance_threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "variance threshold must lie in (0,1]");

  const auto d = h.cols();
  PcaBasis basis;
  basis.variance_threshold = variance_threshold;
  basis.centered = center;
  basis.column_means = center ? Eigen::VectorXd(h.colwise().mean().transpose())
                              : Eigen::VectorXd::Zero(d);
  const Eigen::MatrixXd centered = h.rowwise() - basis.column_means.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(h.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigen returns ascending eigenvalues; walk them in descending order.
  Eigen::VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
  Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  basis.total_variance = values.sum();

  int d_star = 1;
  if (basis.total_variance <= 0.0) {
    basis.degenerate = true;
  } else {
    double cum = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      cum += values[k];
      d_star = static_cast<int>(k + 1);
      if (cum / basis.total_variance >= variance_threshold) break;
    }
  }
  basis.d_star = d_star;
  basis.loadings = vectors.leftCols(d_star);
  for (int k = 0; k < d_star; ++k) {
    Eigen::Index arg = 0;
    basis.loadings.col(k).cwiseAbs().maxCoeff(&arg);
    if (basis.loadings(arg, k) < 0.0) basis.loadings.col(k) *= -1.0;
  }
  basis.explained_variance_ratio =
      basis.degenerate ? Eigen::VectorXd::Zero(d_star)
                       : Eigen::VectorXd(values.head(d_star) / basis.total_variance);
  return basis;
}

Eigen::VectorXd pca_project(const PcaBasis& basis, const Eigen::VectorXd& row) {
  if (row.size() != basis.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "row has " + std::to_string(row.size()) +
                                                  " entries, basis expects " +
                                                  std::to_string(basis.input_dim()));
  // Explicit loop so every caller gets the same summation order.
  Eigen::VectorXd out(basis.d_star);
  for (int k = 0; k < basis.d_star; ++k) {
    double acc = 0.0;
    for (Eigen::Index d = 0; d < row.size(); ++d) acc += (row[d] - basis.column_means[d]) * basis.loadings(d, k);
    out[k] = acc;
  }
  return out;
}

Eigen::VectorXd pca_reconstruct(const PcaBasis& basis, const Eigen::VectorXd& reduced) {
  if (reduced.size() != basis.d_star) throw Error(ErrorCode::DimensionMismatch, "reduced row");
  return basis.column_means + basis.loadings * reduced;
}

FeatureBuild build_features(std::span<const std::optional<Regimen>> visits,
                            const FeatureOptions& opts, const DrugDictionary& dict) {
  FeatureBuild out;
  auto reps = select_representatives(visits, opts.rep_threshold);
  KernelSmoother smoother(reps, opts.kernel_config, opts.kernel, dict);
  out.weights = build_weight_matrix(visits, smoother);
  out.basis.representatives = std::move(reps);
  out.basis.kernel_config = opts.kernel_config;
  out.basis.kernel = opts.kernel;
  out.basis.pca = pca_fit(out.weights.rows, opts.variance_threshold, opts.center);

  const auto& pca = out.basis.pca;
  out.reduced = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(visits.size()), pca.d_star);
  for (std::size_t r = 0; r < out.weights.visit_index.size(); ++r) {
    out.reduced.row(static_cast<Eigen::Index>(out.weights.visit_index[r])) =
        pca_project(pca, out.weights.rows.row(static_cast<Eigen::Index>(r)).transpose()).transpose();
  }
  return out;
}

Eigen::VectorXd reduce_regimen(const FeatureBasis& basis, const std::optional<Regimen>& z,
                               const DrugDictionary& dict) {
  if (!z) return Eigen::VectorXd::Zero(basis.pca.d_star);
  KernelSmoother smoother(basis.representatives, basis.kernel_config, basis.kernel, dict);
  return pca_project(basis.pca, smoother.row(*z).weights);
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const FeatureBasis& basis) {
  nlohmann::json j;
  std::vector<std::string> reps;
  for (const auto& r : basis.representatives.regimens) reps.push_back(r.to_string());
  j["representatives"] = reps;
  j["rep_threshold"] = basis.representatives.min_visit_threshold;
  j["kernel"] = std::string(to_string(basis.kernel));
  j["eta"] = basis.kernel_config.eta;
  j["match_mode"] = std::string(to_string(basis.kernel_config.match_mode));
  const auto& p = basis.pca;
  j["column_means"] = vec_json(p.column_means);
  std::vector<double> loadings;
  for (Eigen::Index r = 0; r < p.loadings.rows(); ++r)
    for (Eigen::Index c = 0; c < p.loadings.cols(); ++c) loadings.push_back(p.loadings(r, c));
  j["loadings_row_major"] = loadings;
  j["d_star"] = p.d_star;
  j["explained_variance_ratio"] = vec_json(p.explained_variance_ratio);
  j["variance_threshold"] = p.variance_threshold;
  j["total_variance"] = p.total_variance;
  j["centered"] = p.centered;
  j["degenerate"] = p.degenerate;
  return j;
}

FeatureBasis feature_basis_from_json(const nlohmann::json& j, const DrugDictionary& dict) {
  FeatureBasis b;
  for (const auto& r : j.at("representatives")) b.representatives.regimens.push_back(parse_regimen(r.get<std::string>(), dict));
  b.representatives.min_visit_threshold = j.at("rep_threshold").get<int>();
  b.kernel = parse_feature_kernel(j.at("kernel").get<std::string>());
  b.kernel_config.eta = j.at("eta").get<double>();
  b.kernel_config.match_mode = parse_match_mode(j.at("match_mode").get<std::string>());
  auto& p = b.pca;
  p.column_means = json_vec(j.at("column_means"));
  p.d_star = j.at("d_star").get<int>();
  const auto loadings = j.at("loadings_row_major").get<std::vector<double>>();
  const auto d = p.column_means.size();
  if (static_cast<Eigen::Index>(loadings.size()) != d * p.d_star)
    throw Error(ErrorCode::DimensionMismatch, "loadings size");
  p.loadings.resize(d, p.d_star);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < p.d_star; ++c) p.loadings(r, c) = loadings[static_cast<std::size_t>(r * p.d_star + c)];
  p.explained_variance_ratio = json_vec(j.at("explained_variance_ratio"));
  p.variance_threshold = j.at("variance_threshold").get<double>();
  p.total_variance = j.at("total_variance").get<double>();
  p.centered = j.at("centered").get<bool>();
  p.degenerate = j.at("degenerate").get<bool>();
  if (static_cast<std::size_t>(d) != b.representatives.size())
    throw Error(ErrorCode::DimensionMismatch, "representatives vs column means");
  return b;
}

}  // namespace drugcomb

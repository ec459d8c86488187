#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"
#include "drugcomb/kernel_features.hpp"

using namespace drugcomb;

namespace {

const DrugDictionary& dict() {
  static const DrugDictionary d = DrugDictionary::standard();
  return d;
}

Regimen reg(const char* text) { return parse_regimen(text, dict()); }

std::vector<std::optional<Regimen>> visits_with_counts(const std::vector<std::pair<const char*, int>>& counts) {
  std::vector<std::optional<Regimen>> v;
  for (const auto& [r, c] : counts)
    for (int i = 0; i < c; ++i) v.emplace_back(reg(r));
  return v;
}

}  // namespace

TEST_CASE("representatives need strictly more visits than the threshold") {
  auto visits = visits_with_counts({{"D4T+LAM+EFV", 11}, {"AZT+LAM+NVP", 10}, {"FTC+TDF+ATZ+RTV", 30}});
  visits.emplace_back(std::nullopt);
  const auto reps = select_representatives(visits, 10);
  REQUIRE(reps.size() == 2);
  CHECK(std::find(reps.regimens.begin(), reps.regimens.end(), reg("AZT+LAM+NVP")) == reps.regimens.end());
  CHECK(std::is_sorted(reps.regimens.begin(), reps.regimens.end()));
}

TEST_CASE("kernel weight rows") {
  RepresentativeSet reps{{reg("D4T+LAM+EFV"), reg("D4T+LAM+IDV"), reg("FTC+TDF+ATZ+RTV")}, 10};
  const KernelConfig cfg{0.5, MatchMode::Strict};
  const auto row = kernel_weight_row(reg("D4T+LAM+EFV"), reps, cfg, dict());
  CHECK(!row.fallback);
  CHECK(row.weights.sum() == doctest::Approx(1.0));
  // kappa(A,A)=3.1875, kappa(A,B)=1, kappa(A,C)=0.
  CHECK(row.weights(0) == doctest::Approx(3.1875 / 4.1875));
  CHECK(row.weights(1) == doctest::Approx(1.0 / 4.1875));
  CHECK(row.weights(2) == 0.0);

  const auto none = kernel_weight_row(reg("SLZ"), reps, cfg, dict());
  CHECK(none.fallback);
  CHECK(none.weights.isApproxToConstant(1.0 / 3.0));

  const KernelSmoother linear(reps, cfg, FeatureKernel::Linear, dict());
  const auto lrow = linear.row(reg("D4T+LAM+EFV"));
  CHECK(lrow.weights(0) == doctest::Approx(1.0 / (1.0 + 2.0 / 3.0)));
}

TEST_CASE("PCA keeps enough variance and projects deterministically") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd h(200, 6);
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const double a = nd(rng), b = nd(rng);
    for (Eigen::Index j = 0; j < 6; ++j) h(i, j) = a * (j + 1) + b * (j % 2) + 1e-3 * nd(rng);
  }
  for (double thr : {0.9, 0.999, 1.0}) {
    const auto basis = pca_fit(h, thr);
    CHECK(basis.explained_variance_ratio.sum() >= thr - 1e-12);
    if (basis.d_star > 1) CHECK(basis.explained_variance_ratio.head(basis.d_star - 1).sum() < thr);
    // Largest-magnitude loading of every component is positive.
    for (int k = 0; k < basis.d_star; ++k) {
      Eigen::Index arg = 0;
      basis.loadings.col(k).cwiseAbs().maxCoeff(&arg);
      CHECK(basis.loadings(arg, k) > 0.0);
    }
    // Residual of the rank-D* reconstruction is the discarded variance.
    double resid = 0.0;
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      const Eigen::VectorXd r = h.row(i).transpose();
      resid += (pca_reconstruct(basis, pca_project(basis, r)) - r).squaredNorm();
    }
    const double total = (h.rowwise() - h.colwise().mean()).squaredNorm();
    CHECK(resid / total <= 1.0 - basis.explained_variance_ratio.sum() + 1e-9);
    const Eigen::VectorXd r0 = h.row(0).transpose();
    CHECK(pca_project(basis, r0) == pca_project(basis, r0));
  }
  CHECK(pca_fit(h, 0.9).d_star <= pca_fit(h, 0.999).d_star);
  CHECK_THROWS_AS(pca_fit(h, 0.0), Error);
}

TEST_CASE("identical rows give a degenerate one-component basis") {
  const Eigen::MatrixXd h = Eigen::MatrixXd::Constant(5, 3, 0.25);
  const auto basis = pca_fit(h, 0.999);
  CHECK(basis.degenerate);
  CHECK(basis.d_star == 1);
}

TEST_CASE("build_features and basis JSON round trip") {
  auto visits = visits_with_counts({{"D4T+LAM+EFV", 15}, {"D4T+LAM+IDV", 12}, {"FTC+TDF+ATZ+RTV", 20},
                                    {"ABC+LAM+EFV", 14}, {"AZT+LAM+LPV+RTV", 2}});
  visits.insert(visits.begin() + 3, std::nullopt);
  const FeatureOptions opts{{0.5, MatchMode::Strict}, FeatureKernel::SubsetTree, 10, 0.999, true};
  const auto fb = build_features(visits, opts, dict());
  CHECK(fb.basis.representatives.size() == 4);
  CHECK(fb.reduced.rows() == static_cast<Eigen::Index>(visits.size()));
  CHECK(fb.reduced.cols() == fb.basis.d_star());
  CHECK(fb.reduced.row(3).isZero());
  CHECK(fb.basis.pca.explained_variance_ratio.sum() >= 0.999);

  const auto j = to_json(fb.basis);
  const auto back = feature_basis_from_json(nlohmann::json::parse(j.dump()), dict());
  CHECK(to_json(back).dump() == j.dump());
  for (std::size_t v = 0; v < visits.size(); ++v) {
    const Eigen::VectorXd a = reduce_regimen(fb.basis, visits[v], dict());
    const Eigen::VectorXd b = reduce_regimen(back, visits[v], dict());
    CHECK(a == b);
    CHECK(a == fb.reduced.row(static_cast<Eigen::Index>(v)).transpose());
  }
  CHECK(reduce_regimen(fb.basis, std::nullopt, dict()).isZero());

  const std::vector<std::optional<Regimen>> sparse = {reg("D4T")};
  CHECK_THROWS_AS(build_features(sparse, opts, dict()), Error);
}

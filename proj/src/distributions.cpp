#include "drugcomb/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "drugcomb/error.hpp"

namespace drugcomb::dist {

double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double uniform(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gamma(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

double inverse_gamma(Rng& rng, double shape, double rate) { return 1.0 / gamma(rng, shape, rate); }

double beta(Rng& rng, double a, double b) {
  const double x = gamma(rng, a, 1.0);
  const double y = gamma(rng, b, 1.0);
  return x / (x + y);
}

std::size_t categorical_log(Rng& rng, std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) throw Error(ErrorCode::InvalidArgument, "all categorical weights are zero");
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(log_weights[k] - top);
    total += w[k];
  }
  double u = uniform(rng) * total;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (u < w[k]) return k;
    u -= w[k];
  }
  // Rounding left u just above the last positive weight.
  for (std::size_t k = w.size(); k-- > 0;)
    if (w[k] > 0.0) return k;
  return 0;
}

Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
  return z;
}

Eigen::VectorXd mvn_chol(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower) {
  return mean + chol_lower.triangularView<Eigen::Lower>() * standard_normal_vector(rng, mean.size());
}

Eigen::VectorXd mvn(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularPrecision, "covariance not PD");
  return mvn_chol(rng, mean, llt.matrixL());
}

Eigen::VectorXd mvn_canonical(Rng& rng, const Eigen::VectorXd& b, const Eigen::MatrixXd& precision) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularPrecision, "precision not PD");
  const Eigen::VectorXd mean = llt.solve(b);
  // P = L L^T, so L^{-T} z has covariance P^{-1}.
  const Eigen::VectorXd z = standard_normal_vector(rng, b.size());
  return mean + llt.matrixU().solve(z);
}

Eigen::MatrixXd wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const auto p = scale.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonPDScale, "Wishart scale not PD");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(2.0 * gamma(rng, 0.5 * (df - static_cast<double>(i)), 1.0));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = normal(rng);
  }
  const Eigen::MatrixXd la = Eigen::MatrixXd(llt.matrixL()) * a;
  return symmetrize(la * la.transpose());
}

Eigen::MatrixXd inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const Eigen::MatrixXd sym = symmetrize(scale);
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonPDScale, "inverse-Wishart scale not PD");
  const Eigen::MatrixXd scale_inv = llt.solve(Eigen::MatrixXd::Identity(sym.rows(), sym.cols()));
  return inverse_spd(wishart(rng, df, symmetrize(scale_inv)));
}

Eigen::MatrixXd lkj_correlation(Rng& rng, int dim, double eta) {
  Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(dim, dim);
  double b = eta + 0.5 * (dim - 1);
  for (int k = 0; k < dim - 1; ++k) {
    b -= 0.5;
    for (int i = k + 1; i < dim; ++i) {
      partial(k, i) = 2.0 * beta(rng, b, b) - 1.0;
      double p = partial(k, i);
      for (int l = k - 1; l >= 0; --l)
        p = p * std::sqrt((1.0 - partial(l, i) * partial(l, i)) * (1.0 - partial(l, k) * partial(l, k))) +
            partial(l, i) * partial(l, k);
      corr(k, i) = corr(i, k) = p;
    }
  }
  return corr;
}

double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularPrecision, "covariance not PD");
  const Eigen::VectorXd z = llt.matrixL().solve(x - mean);
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm());
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularPrecision, "matrix not PD");
  return symmetrize(llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols())));
}

}  // namespace drugcomb::dist

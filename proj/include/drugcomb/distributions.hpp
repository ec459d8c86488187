#pragma once

#include <random>
#include <span>

#include <Eigen/Dense>

namespace drugcomb {

using Rng = std::mt19937_64;

namespace dist {

double normal(Rng& rng);
double uniform(Rng& rng);  // [0,1)
double uniform(Rng& rng, double lo, double hi);
double gamma(Rng& rng, double shape, double rate);
double inverse_gamma(Rng& rng, double shape, double rate);
double beta(Rng& rng, double a, double b);

// Index drawn with probability proportional to exp(log_weights).
// Entries equal to -inf get zero mass.
std::size_t categorical_log(Rng& rng, std::span<const double> log_weights);

Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index n);

// x ~ N(mean, cov) given the lower Cholesky factor of cov.
Eigen::VectorXd mvn_chol(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower);
Eigen::VectorXd mvn(Rng& rng, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

// x ~ N(P^{-1} b, P^{-1}) for precision P.
Eigen::VectorXd mvn_canonical(Rng& rng, const Eigen::VectorXd& b, const Eigen::MatrixXd& precision);

// Wishart(df, scale) by the Bartlett decomposition; mean df * scale.
Eigen::MatrixXd wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);

// Inverse-Wishart(df, scale); mean scale / (df - p - 1).
Eigen::MatrixXd inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);

// Correlation matrix with density proportional to det(R)^(eta - 1)
// (LKJ), by the C-vine construction.
Eigen::MatrixXd lkj_correlation(Rng& rng, int dim, double eta);

double mvn_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);
Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m);  // throws SingularPrecision

}  // namespace dist
}  // namespace drugcomb

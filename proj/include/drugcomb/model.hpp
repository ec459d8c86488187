#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drugcomb/distributions.hpp"
#include "drugcomb/regimen_kernel.hpp"

namespace drugcomb {

// ---------------------------------------------------------------------------
// Data

struct VisitRecord {
  long visit_index = 0;
  std::optional<Regimen> regimen;  // nullopt: no ART at this visit
  Eigen::VectorXd y;               // Q outcome items
  Eigen::VectorXd x;               // S covariates, x[0] == 1
};

struct IndividualRecord {
  std::string id;
  std::vector<VisitRecord> visits;

  TreatmentRecord treatment() const;
  RegimenHistory history(bool keep_duplicates = false) const { return treatment().to_history(keep_duplicates); }
};

class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;
  LongitudinalDataset(int q, int s, std::vector<IndividualRecord> individuals,
                      std::vector<std::string> item_names = {},
                      std::vector<std::string> covariate_names = {});

  int q() const { return q_; }
  int s() const { return s_; }
  std::size_t n() const { return individuals_.size(); }
  std::size_t total_visits() const;

  const std::vector<IndividualRecord>& individuals() const { return individuals_; }
  const std::vector<std::string>& item_names() const { return item_names_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  // All visit regimens, individual-major. Row order of every N-row matrix.
  std::vector<std::optional<Regimen>> visit_regimens() const;
  std::vector<RegimenHistory> histories(bool keep_duplicates = false) const;

  // CSV `individual_id,visit_index,regimen,y1..yQ,x1..xS`.
  static LongitudinalDataset read_csv(std::istream& in, const DrugDictionary& dict);
  void write_csv(std::ostream& out) const;

 private:
  void validate() const;

  int q_ = 0;
  int s_ = 0;
  std::vector<IndividualRecord> individuals_;
  std::vector<std::string> item_names_;
  std::vector<std::string> covariate_names_;
};

// Per-individual design blocks used by the likelihood and the sampler.
// Columns are visits.
struct IndividualBlock {
  Eigen::MatrixXd y;   // Q x J
  Eigen::MatrixXd x;   // S x J
  Eigen::MatrixXd h;   // D* x J
  Eigen::MatrixXd xx;  // S x S
  Eigen::MatrixXd hh;  // D* x D*
  Eigen::MatrixXd xh;  // S x D*
  std::size_t first_visit = 0;

  Eigen::Index visits() const { return y.cols(); }
};

class ModelData {
 public:
  ModelData(int q, int s, int d_star, std::vector<IndividualBlock> blocks);

  // `reduced` holds one feature row per visit in individual-major order.
  static ModelData assemble(const LongitudinalDataset& data, const Eigen::MatrixXd& reduced);

  int q() const { return q_; }
  int s() const { return s_; }
  int d_star() const { return d_star_; }
  std::size_t n() const { return blocks_.size(); }
  std::size_t total_visits() const { return total_visits_; }
  const IndividualBlock& block(std::size_t i) const { return blocks_[i]; }
  const std::vector<IndividualBlock>& blocks() const { return blocks_; }

  // Swaps in new outcomes for individual i (joint-distribution testing).
  void replace_outcomes(std::size_t i, const Eigen::MatrixXd& y);

 private:
  int q_, s_, d_star_;
  std::vector<IndividualBlock> blocks_;
  std::size_t total_visits_ = 0;
};

// ---------------------------------------------------------------------------
// Parameters

struct ClusterParams {
  Eigen::MatrixXd beta;   // Q x S
  Eigen::MatrixXd gamma;  // Q x D*
};

// Cluster labels 0..r-1, contiguous, each cluster non-empty. from_labels
// numbers clusters by first appearance; move() keeps ids contiguous but not
// necessarily in that order. Equality compares canonical forms.
class Partition {
 public:
  Partition() = default;
  static Partition from_labels(std::span<const int> labels);  // relabels to canonical form
  static Partition single_cluster(std::size_t n);
  static Partition singletons(std::size_t n);

  std::size_t n() const { return labels_.size(); }
  int num_clusters() const { return static_cast<int>(sizes_.size()); }
  int label(std::size_t i) const { return labels_[i]; }
  int size(int k) const { return sizes_[static_cast<std::size_t>(k)]; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& sizes() const { return sizes_; }
  std::vector<std::vector<int>> members() const;

  // Moves item i to cluster k; k == num_clusters() opens a new cluster.
  // Returns the id of the cluster that became empty and was removed (ids
  // above it shift down by one), or -1.
  int move(std::size_t i, int k);

  bool valid() const;
  friend bool operator==(const Partition& a, const Partition& b);

 private:
  std::vector<int> labels_;
  std::vector<int> sizes_;
};

// Canonical form: labels numbered by first appearance.
std::vector<int> canonical_labels(std::span<const int> labels);

// All set partitions of n items in canonical label form (restricted growth strings).
std::vector<std::vector<int>> enumerate_set_partitions(int n);

struct Hyperparams {
  double c0 = 1.0, d0 = 1.0;  // Gamma(c0, rate d0) on m0
  double g1 = 1.0, g2 = 1.0;  // Inverse-Gamma(g1, rate g2) on sigma_eps^2
  Eigen::MatrixXd e0_cov;     // E0, prior covariance of e_q
  double b0 = 0.0;            // IW degrees of freedom for B_q
  Eigen::MatrixXd b0_scale;   // IW scale for B_q
  Eigen::MatrixXd f0_cov;     // F0
  double lambda0 = 0.0;
  Eigen::MatrixXd lambda0_scale;

  // c0=d0=1, g1=g2=1, E0=100 I, b0=S+1, B0^-1=100 I, F0=100 I,
  // lambda0=D*+1, Lambda0^-1=100 I.
  static Hyperparams defaults(int s, int d_star);
  void validate(int s, int d_star) const;
};

// Per-item latent prior layer of G0.
struct LatentPriors {
  std::vector<Eigen::VectorXd> e;       // Q x (S)
  std::vector<Eigen::MatrixXd> b;       // Q x (S x S)
  std::vector<Eigen::VectorXd> f;       // Q x (D*)
  std::vector<Eigen::MatrixXd> lambda;  // Q x (D* x D*)

  static LatentPriors identity(int q, int s, int d_star);
};

struct NoiseState {
  Eigen::MatrixXd omega;        // Q x N, one column per visit
  Eigen::MatrixXd sigma_omega;  // Q x Q correlation matrix
  double sigma_eps2 = 1.0;
};

bool is_correlation_matrix(const Eigen::MatrixXd& m);

struct SimilarityContext {
  Eigen::MatrixXd similarity;  // n x n, symmetric, non-negative
  std::vector<int> sigma;      // sigma[t] = item seated at position t
  double m0 = 1.0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// ddCRP partition distribution

// Direct evaluation of the sequential-seating pmf. When an item joins an
// existing subset and has zero similarity to every earlier item, the
// within-subset ratio becomes |S| / (t - 1).
double ddcrp_log_pmf(const Partition& part, const SimilarityContext& ctx);

// One draw by sequential seating in sigma order.
Partition ddcrp_sample(const SimilarityContext& ctx, Rng& rng);

// Keeps per-position within-cluster similarity sums so that the log prior of
// every single-item move can be evaluated in O(n) total.
class DdcrpSeating {
 public:
  DdcrpSeating(const Eigen::MatrixXd& similarity, std::span<const int> sigma, double m0,
               Partition part);

  const Partition& partition() const { return part_; }

  // Log prior, up to a constant shared by all candidates, of moving item i
  // to each existing cluster k (entry k) or to a new cluster (last entry).
  // When i is a singleton its own cluster's entry equals the new-cluster
  // entry. The current partition must have positive prior probability.
  std::vector<double> move_log_weights(std::size_t i) const;

  // Same contract as Partition::move.
  int move(std::size_t i, int k);

 private:
  double term(std::size_t item, int count_before, double within) const;
  void refresh_cluster(int k);

  const Eigen::MatrixXd& sim_;
  std::vector<int> pos_;            // position of each item
  std::vector<double> total_before_;  // per item: similarity to all earlier items
  double log_m0_;
  Partition part_;
  std::vector<std::vector<int>> members_;  // per cluster, sorted by position
  std::vector<double> within_;             // per item, similarity to earlier cluster mates
};

// ---------------------------------------------------------------------------
// Likelihood

Eigen::VectorXd combination_effect(const Eigen::MatrixXd& gamma_star, const Eigen::VectorXd& h_row);

double log_likelihood(const ModelData& data, const Partition& part,
                      std::span<const ClusterParams> clusters, const NoiseState& noise);

}  // namespace drugcomb

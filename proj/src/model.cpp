#include "drugcomb/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>

#include "csv.hpp"
#include "drugcomb/error.hpp"

namespace drugcomb {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Data

TreatmentRecord IndividualRecord::treatment() const {
  TreatmentRecord rec{id, {}};
  for (const auto& v : visits) rec.visits.push_back(v.regimen);
  return rec;
}

LongitudinalDataset::LongitudinalDataset(int q, int s, std::vector<IndividualRecord> individuals,
                                         std::vector<std::string> item_names,
                                         std::vector<std::string> covariate_names)
    : q_(q),
      s_(s),
      individuals_(std::move(individuals)),
      item_names_(std::move(item_names)),
      covariate_names_(std::move(covariate_names)) {
  if (item_names_.empty())
    for (int k = 0; k < q_; ++k) item_names_.push_back("y" + std::to_string(k + 1));
  if (covariate_names_.empty())
    for (int k = 0; k < s_; ++k) covariate_names_.push_back("x" + std::to_string(k + 1));
  validate();
}

void LongitudinalDataset::validate() const {
  if (q_ < 1 || s_ < 1) throw Error(ErrorCode::InvalidArgument, "Q and S must be positive");
  if (static_cast<int>(item_names_.size()) != q_ || static_cast<int>(covariate_names_.size()) != s_)
    throw Error(ErrorCode::DimensionMismatch, "column names");
  for (const auto& ind : individuals_) {
    if (ind.visits.empty()) throw Error(ErrorCode::InvalidArgument, "individual " + ind.id + " has no visits");
    for (const auto& v : ind.visits) {
      if (v.y.size() != q_ || v.x.size() != s_)
        throw Error(ErrorCode::DimensionMismatch, "visit of individual " + ind.id);
      if (!v.y.allFinite() || !v.x.allFinite())
        throw Error(ErrorCode::InvalidArgument, "non-finite value for individual " + ind.id);
    }
  }
}

std::size_t LongitudinalDataset::total_visits() const {
  std::size_t total = 0;
  for (const auto& ind : individuals_) total += ind.visits.size();
  return total;
}

std::vector<std::optional<Regimen>> LongitudinalDataset::visit_regimens() const {
  std::vector<std::optional<Regimen>> out;
  out.reserve(total_visits());
  for (const auto& ind : individuals_)
    for (const auto& v : ind.visits) out.push_back(v.regimen);
  return out;
}

std::vector<RegimenHistory> LongitudinalDataset::histories(bool keep_duplicates) const {
  std::vector<RegimenHistory> out;
  for (const auto& ind : individuals_) out.push_back(ind.history(keep_duplicates));
  return out;
}

LongitudinalDataset LongitudinalDataset::read_csv(std::istream& in, const DrugDictionary& dict) {
  std::vector<std::string> header;
  if (!csv::next_row(in, header) || header.size() < 5 || header[0] != "individual_id" ||
      header[1] != "visit_index" || header[2] != "regimen") {
    throw Error(ErrorCode::ParseError,
                "dataset header must be individual_id,visit_index,regimen,y1..yQ,x1..xS");
  }
  std::vector<std::string> items, covs;
  for (std::size_t c = 3; c < header.size(); ++c) {
    const auto& name = header[c];
    if (!name.empty() && name[0] == 'y' && covs.empty()) items.push_back(name);
    else if (!name.empty() && name[0] == 'x') covs.push_back(name);
    else throw Error(ErrorCode::ParseError, "unexpected column '" + name + "'");
  }
  const int q = static_cast<int>(items.size());
  const int s = static_cast<int>(covs.size());

  std::vector<IndividualRecord> individuals;
  std::map<std::string, std::size_t> index;
  std::vector<std::string> row;
  while (csv::next_row(in, row)) {
    if (row.size() != header.size()) throw Error(ErrorCode::ParseError, "row width mismatch");
    auto [it, inserted] = index.try_emplace(row[0], individuals.size());
    if (inserted) individuals.push_back({row[0], {}});
    VisitRecord v;
    v.visit_index = std::stol(row[1]);
    if (!row[2].empty()) v.regimen = parse_regimen(row[2], dict);
    v.y.resize(q);
    v.x.resize(s);
    for (int k = 0; k < q; ++k) v.y[k] = std::stod(row[3 + static_cast<std::size_t>(k)]);
    for (int k = 0; k < s; ++k) v.x[k] = std::stod(row[3 + static_cast<std::size_t>(q + k)]);
    individuals[it->second].visits.push_back(std::move(v));
  }
  for (auto& ind : individuals) {
    std::stable_sort(ind.visits.begin(), ind.visits.end(),
                     [](const VisitRecord& a, const VisitRecord& b) { return a.visit_index < b.visit_index; });
  }
  return LongitudinalDataset(q, s, std::move(individuals), std::move(items), std::move(covs));
}

void LongitudinalDataset::write_csv(std::ostream& out) const {
  out << "individual_id,visit_index,regimen";
  for (const auto& n : item_names_) out << ',' << n;
  for (const auto& n : covariate_names_) out << ',' << n;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (const auto& ind : individuals_) {
    for (const auto& v : ind.visits) {
      out << ind.id << ',' << v.visit_index << ',' << (v.regimen ? v.regimen->to_string() : "");
      for (Eigen::Index k = 0; k < v.y.size(); ++k) out << ',' << v.y[k];
      for (Eigen::Index k = 0; k < v.x.size(); ++k) out << ',' << v.x[k];
      out << '\n';
    }
  }
  out.precision(old_precision);
}

ModelData::ModelData(int q, int s, int d_star, std::vector<IndividualBlock> blocks)
    : q_(q), s_(s), d_star_(d_star), blocks_(std::move(blocks)) {
  for (auto& b : blocks_) {
    if (b.y.rows() != q_ || b.x.rows() != s_ || b.h.rows() != d_star_ || b.x.cols() != b.y.cols() ||
        b.h.cols() != b.y.cols())
      throw Error(ErrorCode::DimensionMismatch, "individual block");
    b.first_visit = total_visits_;
    b.xx = b.x * b.x.transpose();
    b.hh = b.h * b.h.transpose();
    b.xh = b.x * b.h.transpose();
    total_visits_ += static_cast<std::size_t>(b.y.cols());
  }
}

void ModelData::replace_outcomes(std::size_t i, const Eigen::MatrixXd& y) {
  auto& b = blocks_.at(i);
  if (y.rows() != b.y.rows() || y.cols() != b.y.cols()) throw Error(ErrorCode::DimensionMismatch, "outcome block");
  b.y = y;
}

ModelData ModelData::assemble(const LongitudinalDataset& data, const Eigen::MatrixXd& reduced) {
  if (static_cast<std::size_t>(reduced.rows()) != data.total_visits())
    throw Error(ErrorCode::DimensionMismatch, "feature rows vs visits");
  std::vector<IndividualBlock> blocks;
  Eigen::Index row = 0;
  for (const auto& ind : data.individuals()) {
    const auto j = static_cast<Eigen::Index>(ind.visits.size());
    IndividualBlock b;
    b.y.resize(data.q(), j);
    b.x.resize(data.s(), j);
    b.h.resize(reduced.cols(), j);
    for (Eigen::Index v = 0; v < j; ++v, ++row) {
      b.y.col(v) = ind.visits[static_cast<std::size_t>(v)].y;
      b.x.col(v) = ind.visits[static_cast<std::size_t>(v)].x;
      b.h.col(v) = reduced.row(row).transpose();
    }
    blocks.push_back(std::move(b));
  }
  return ModelData(data.q(), data.s(), static_cast<int>(reduced.cols()), std::move(blocks));
}

// ---------------------------------------------------------------------------
// Partition

std::vector<int> canonical_labels(std::span<const int> labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, inserted] = remap.try_emplace(l, static_cast<int>(remap.size()));
    out.push_back(it->second);
  }
  return out;
}

Partition Partition::from_labels(std::span<const int> labels) {
  Partition p;
  p.labels_ = canonical_labels(labels);
  for (int l : p.labels_) {
    if (l >= static_cast<int>(p.sizes_.size())) p.sizes_.resize(static_cast<std::size_t>(l + 1), 0);
    ++p.sizes_[static_cast<std::size_t>(l)];
  }
  return p;
}

Partition Partition::single_cluster(std::size_t n) {
  std::vector<int> l(n, 0);
  return from_labels(l);
}

Partition Partition::singletons(std::size_t n) {
  std::vector<int> l(n);
  std::iota(l.begin(), l.end(), 0);
  return from_labels(l);
}

std::vector<std::vector<int>> Partition::members() const {
  std::vector<std::vector<int>> m(sizes_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) m[static_cast<std::size_t>(labels_[i])].push_back(static_cast<int>(i));
  return m;
}

int Partition::move(std::size_t i, int k) {
  const int from = labels_[i];
  if (k == from) return -1;
  if (k == num_clusters()) sizes_.push_back(0);
  if (k < 0 || k > num_clusters()) throw Error(ErrorCode::InvalidArgument, "cluster id out of range");
  labels_[i] = k;
  ++sizes_[static_cast<std::size_t>(k)];
  if (--sizes_[static_cast<std::size_t>(from)] > 0) return -1;
  sizes_.erase(sizes_.begin() + from);
  for (auto& l : labels_)
    if (l > from) --l;
  return from;
}

bool operator==(const Partition& a, const Partition& b) {
  return canonical_labels(a.labels_) == canonical_labels(b.labels_);
}

bool Partition::valid() const {
  std::vector<int> counts(sizes_.size(), 0);
  for (int l : labels_) {
    if (l < 0 || l >= num_clusters()) return false;
    ++counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t k = 0; k < sizes_.size(); ++k)
    if (sizes_[k] <= 0 || counts[k] != sizes_[k]) return false;
  return true;
}

std::vector<std::vector<int>> enumerate_set_partitions(int n) {
  std::vector<std::vector<int>> out;
  if (n <= 0) return out;
  std::vector<int> a(static_cast<std::size_t>(n), 0);
  // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[0..i-1]).
  std::function<void(int, int)> rec = [&](int i, int max_label) {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int l = 0; l <= max_label + 1; ++l) {
      a[static_cast<std::size_t>(i)] = l;
      rec(i + 1, std::max(max_label, l));
    }
  };
  rec(1, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

Hyperparams Hyperparams::defaults(int s, int d_star) {
  Hyperparams h;
  h.e0_cov = 100.0 * Eigen::MatrixXd::Identity(s, s);
  h.b0 = s + 1;
  h.b0_scale = 0.01 * Eigen::MatrixXd::Identity(s, s);
  h.f0_cov = 100.0 * Eigen::MatrixXd::Identity(d_star, d_star);
  h.lambda0 = d_star + 1;
  h.lambda0_scale = 0.01 * Eigen::MatrixXd::Identity(d_star, d_star);
  return h;
}

void Hyperparams::validate(int s, int d_star) const {
  auto spd = [](const Eigen::MatrixXd& m, Eigen::Index dim) {
    if (m.rows() != dim || m.cols() != dim) return false;
    if (!m.isApprox(m.transpose())) return false;
    return Eigen::LLT<Eigen::MatrixXd>(m).info() == Eigen::Success;
  };
  if (!(c0 > 0 && d0 > 0 && g1 > 0 && g2 > 0))
    throw Error(ErrorCode::InvalidArgument, "gamma hyperparameters must be positive");
  if (!spd(e0_cov, s) || !spd(b0_scale, s) || !spd(f0_cov, d_star) || !spd(lambda0_scale, d_star))
    throw Error(ErrorCode::InvalidArgument, "hyperparameter matrices must be SPD with matching dimensions");
  if (!(b0 > s - 1) || !(lambda0 > d_star - 1))
    throw Error(ErrorCode::InvalidArgument, "inverse-Wishart degrees of freedom too small");
}

LatentPriors LatentPriors::identity(int q, int s, int d_star) {
  LatentPriors p;
  for (int k = 0; k < q; ++k) {
    p.e.push_back(Eigen::VectorXd::Zero(s));
    p.b.push_back(Eigen::MatrixXd::Identity(s, s));
    p.f.push_back(Eigen::VectorXd::Zero(d_star));
    p.lambda.push_back(Eigen::MatrixXd::Identity(d_star, d_star));
  }
  return p;
}

bool is_correlation_matrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m(i, i) != 1.0) return false;
    for (Eigen::Index j = 0; j < i; ++j)
      if (m(i, j) != m(j, i) || std::abs(m(i, j)) >= 1.0) return false;
  }
  return Eigen::LLT<Eigen::MatrixXd>(m).info() == Eigen::Success;
}

void SimilarityContext::validate() const {
  const auto n = similarity.rows();
  if (similarity.cols() != n || static_cast<Eigen::Index>(sigma.size()) != n)
    throw Error(ErrorCode::DimensionMismatch, "similarity context");
  if (!(m0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "m0 must be positive");
  if (!similarity.allFinite() || (similarity.array() < 0.0).any() || similarity != similarity.transpose())
    throw Error(ErrorCode::InvalidArgument, "similarity must be symmetric, finite and non-negative");
  std::vector<char> seen(sigma.size(), 0);
  for (int s : sigma) {
    if (s < 0 || s >= n || seen[static_cast<std::size_t>(s)]) throw Error(ErrorCode::InvalidArgument, "sigma is not a permutation");
    seen[static_cast<std::size_t>(s)] = 1;
  }
}

// ---------------------------------------------------------------------------
// ddCRP

double ddcrp_log_pmf(const Partition& part, const SimilarityContext& ctx) {
  const auto n = part.n();
  if (static_cast<std::size_t>(ctx.similarity.rows()) != n || ctx.sigma.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "partition vs similarity context");
  double lp = 0.0;
  for (std::size_t t = 1; t < n; ++t) {
    const int item = ctx.sigma[t];
    const int label = part.label(static_cast<std::size_t>(item));
    double total = 0.0, within = 0.0;
    int count = 0;
    for (std::size_t s = 0; s < t; ++s) {
      const int other = ctx.sigma[s];
      const double w = ctx.similarity(item, other);
      total += w;
      if (part.label(static_cast<std::size_t>(other)) == label) {
        within += w;
        ++count;
      }
    }
    const double td = static_cast<double>(t);
    if (count == 0) {
      lp += std::log(ctx.m0) - std::log(ctx.m0 + td);
    } else if (total > 0.0) {
      lp += std::log(td) - std::log(ctx.m0 + td) + (within > 0.0 ? std::log(within) - std::log(total) : kNegInf);
    } else {
      lp += std::log(static_cast<double>(count)) - std::log(ctx.m0 + td);
    }
  }
  return lp;
}

Partition ddcrp_sample(const SimilarityContext& ctx, Rng& rng) {
  ctx.validate();
  const auto n = ctx.sigma.size();
  std::vector<int> labels(n, -1);
  int clusters = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const int item = ctx.sigma[t];
    if (t == 0) {
      labels[static_cast<std::size_t>(item)] = clusters++;
      continue;
    }
    std::vector<double> within(static_cast<std::size_t>(clusters), 0.0);
    std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
    double total = 0.0;
    for (std::size_t s = 0; s < t; ++s) {
      const int other = ctx.sigma[s];
      const double w = ctx.similarity(item, other);
      const auto k = static_cast<std::size_t>(labels[static_cast<std::size_t>(other)]);
      within[k] += w;
      ++counts[k];
      total += w;
    }
    const double td = static_cast<double>(t);
    std::vector<double> logw(static_cast<std::size_t>(clusters) + 1);
    for (std::size_t k = 0; k < within.size(); ++k) {
      const double ratio = total > 0.0 ? within[k] / total : counts[k] / td;
      logw[k] = ratio > 0.0 ? std::log(td) + std::log(ratio) : kNegInf;
    }
    logw.back() = std::log(ctx.m0);
    const auto k = dist::categorical_log(rng, logw);
    labels[static_cast<std::size_t>(item)] = k == within.size() ? clusters++ : static_cast<int>(k);
  }
  return Partition::from_labels(labels);
}

DdcrpSeating::DdcrpSeating(const Eigen::MatrixXd& similarity, std::span<const int> sigma, double m0,
                           Partition part)
    : sim_(similarity),
      pos_(sigma.size()),
      total_before_(sigma.size(), 0.0),
      log_m0_(std::log(m0)),
      part_(std::move(part)),
      within_(sigma.size(), 0.0) {
  const auto n = sigma.size();
  if (part_.n() != n || static_cast<std::size_t>(sim_.rows()) != n)
    throw Error(ErrorCode::DimensionMismatch, "seating");
  for (std::size_t t = 0; t < n; ++t) pos_[static_cast<std::size_t>(sigma[t])] = static_cast<int>(t);
  for (std::size_t t = 0; t < n; ++t) {
    double total = 0.0;
    for (std::size_t s = 0; s < t; ++s) total += sim_(sigma[t], sigma[s]);
    total_before_[static_cast<std::size_t>(sigma[t])] = total;
  }
  members_ = part_.members();
  for (int k = 0; k < part_.num_clusters(); ++k) refresh_cluster(k);
}

double DdcrpSeating::term(std::size_t item, int count_before, double within) const {
  if (count_before == 0) return log_m0_;
  const double total = total_before_[item];
  if (total > 0.0) {
    if (within <= 0.0) return kNegInf;
    return std::log(static_cast<double>(pos_[item])) + std::log(within) - std::log(total);
  }
  return std::log(static_cast<double>(count_before));
}

void DdcrpSeating::refresh_cluster(int k) {
  auto& m = members_[static_cast<std::size_t>(k)];
  std::sort(m.begin(), m.end(), [&](int a, int b) { return pos_[static_cast<std::size_t>(a)] < pos_[static_cast<std::size_t>(b)]; });
  for (std::size_t l = 0; l < m.size(); ++l) {
    double w = 0.0;
    for (std::size_t p = 0; p < l; ++p) w += sim_(m[l], m[p]);
    within_[static_cast<std::size_t>(m[l])] = w;
  }
}

std::vector<double> DdcrpSeating::move_log_weights(std::size_t i) const {
  const int r = part_.num_clusters();
  const int c = part_.label(i);
  const int pi = pos_[i];
  std::vector<double> out(static_cast<std::size_t>(r) + 1, 0.0);

  // Change in log prior from taking i out of its cluster.
  double removal = 0.0;
  const auto& own = members_[static_cast<std::size_t>(c)];
  int before_i = 0;
  for (std::size_t l = 0; l < own.size(); ++l) {
    const auto m = static_cast<std::size_t>(own[l]);
    if (m == i) {
      before_i = static_cast<int>(l);
      continue;
    }
    if (pos_[m] < pi) continue;
    const int count = static_cast<int>(l);
    const int count_after = count - 1;
    const double within_after = count_after == 0 ? 0.0 : std::max(0.0, within_[m] - sim_(m, i));
    removal += term(m, count_after, within_after) - term(m, count, within_[m]);
  }
  removal -= term(i, before_i, within_[i]);

  for (int k = 0; k < r; ++k) {
    if (k == c) continue;
    const auto& mem = members_[static_cast<std::size_t>(k)];
    int count_i = 0;
    double within_i = 0.0;
    double added = 0.0;
    for (std::size_t l = 0; l < mem.size(); ++l) {
      const auto m = static_cast<std::size_t>(mem[l]);
      if (pos_[m] < pi) {
        ++count_i;
        within_i += sim_(i, m);
      } else {
        const int count = static_cast<int>(l);
        added += term(m, count + 1, within_[m] + sim_(m, i)) - term(m, count, within_[m]);
      }
    }
    added += term(i, count_i, within_i);
    out[static_cast<std::size_t>(k)] = removal + added;
  }
  out.back() = removal + log_m0_;
  if (part_.size(c) == 1) out[static_cast<std::size_t>(c)] = out.back();
  return out;
}

int DdcrpSeating::move(std::size_t i, int k) {
  const int c = part_.label(i);
  if (k == c) return -1;
  const int r = part_.num_clusters();
  const int removed = part_.move(i, k);
  auto& own = members_[static_cast<std::size_t>(c)];
  own.erase(std::find(own.begin(), own.end(), static_cast<int>(i)));
  if (k == r) members_.push_back({static_cast<int>(i)});
  else members_[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));
  int target = k;
  if (removed >= 0) {
    members_.erase(members_.begin() + removed);
    if (target > removed) --target;
  } else {
    refresh_cluster(c);
  }
  refresh_cluster(target);
  return removed;
}

// ---------------------------------------------------------------------------
// Likelihood

Eigen::VectorXd combination_effect(const Eigen::MatrixXd& gamma_star, const Eigen::VectorXd& h_row) {
  if (gamma_star.cols() != h_row.size())
    throw Error(ErrorCode::DimensionMismatch, "gamma has " + std::to_string(gamma_star.cols()) +
                                                  " columns, feature row has " + std::to_string(h_row.size()));
  return gamma_star * h_row;
}

double log_likelihood(const ModelData& data, const Partition& part,
                      std::span<const ClusterParams> clusters, const NoiseState& noise) {
  if (part.n() != data.n() || static_cast<int>(clusters.size()) != part.num_clusters())
    throw Error(ErrorCode::DimensionMismatch, "partition vs data");
  double ss = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto& b = data.block(i);
    const auto& th = clusters[static_cast<std::size_t>(part.label(i))];
    const Eigen::MatrixXd resid = b.y - th.beta * b.x - th.gamma * b.h -
                                  noise.omega.middleCols(static_cast<Eigen::Index>(b.first_visit), b.visits());
    ss += resid.squaredNorm();
  }
  const double nq = static_cast<double>(data.total_visits()) * data.q();
  const double ll = -0.5 * nq * std::log(2.0 * std::numbers::pi * noise.sigma_eps2) - 0.5 * ss / noise.sigma_eps2;
  if (!std::isfinite(ll)) throw Error(ErrorCode::NonFiniteLikelihood, "");
  return ll;
}

}  // namespace drugcomb

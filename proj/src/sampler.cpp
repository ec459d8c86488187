#include "drugcomb/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"
#include "json_util.hpp"

namespace drugcomb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using nlohmann::json;

Eigen::MatrixXd lower_chol(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NonPDScale, "prior covariance not PD");
  return llt.matrixL();
}

// Cholesky factors of B_q and Lambda_q, reused for every G0 draw in a sweep.
struct BaseFactors {
  std::vector<Eigen::MatrixXd> lb, lf;

  explicit BaseFactors(const LatentPriors& p) {
    for (const auto& b : p.b) lb.push_back(lower_chol(b));
    for (const auto& l : p.lambda) lf.push_back(lower_chol(l));
  }

  ClusterParams draw(const LatentPriors& p, Rng& rng) const {
    const auto q = static_cast<Eigen::Index>(p.e.size());
    ClusterParams th{Eigen::MatrixXd(q, p.e[0].size()), Eigen::MatrixXd(q, p.f[0].size())};
    for (Eigen::Index k = 0; k < q; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      th.beta.row(k) = dist::mvn_chol(rng, p.e[kk], lb[kk]).transpose();
      th.gamma.row(k) = dist::mvn_chol(rng, p.f[kk], lf[kk]).transpose();
    }
    return th;
  }
};

Eigen::MatrixXd omega_block(const NoiseState& noise, const IndividualBlock& b) {
  return noise.omega.middleCols(static_cast<Eigen::Index>(b.first_visit), b.visits());
}

double block_loglik(const Eigen::MatrixXd& y_tilde, const IndividualBlock& b, const ClusterParams& th,
                    double sigma_eps2) {
  return -0.5 * (y_tilde - th.beta * b.x - th.gamma * b.h).squaredNorm() / sigma_eps2;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(SigmaEpsMode m) { return m == SigmaEpsMode::Paper ? "paper" : "consistent"; }

std::string_view to_string(BaselineMode m) {
  switch (m) {
    case BaselineMode::DdcrpSt: return "ddcrp_st";
    case BaselineMode::DpLinear: return "dp_linear";
    case BaselineMode::NormalLinear: return "normal_linear";
  }
  return "?";
}

SigmaEpsMode parse_sigma_eps_mode(std::string_view text) {
  if (text == "paper") return SigmaEpsMode::Paper;
  if (text == "consistent") return SigmaEpsMode::Consistent;
  throw Error(ErrorCode::InvalidArgument, "sigma_eps_mode must be paper or consistent");
}

BaselineMode parse_baseline_mode(std::string_view text) {
  if (text == "ddcrp_st") return BaselineMode::DdcrpSt;
  if (text == "dp_linear") return BaselineMode::DpLinear;
  if (text == "normal_linear") return BaselineMode::NormalLinear;
  throw Error(ErrorCode::InvalidArgument, "baseline must be ddcrp_st, dp_linear or normal_linear");
}

void McmcConfig::validate() const {
  if (!(n_iter > burn_in && burn_in >= 0)) throw Error(ErrorCode::InvalidArgument, "need n_iter > burn_in >= 0");
  if (thin < 1) throw Error(ErrorCode::InvalidArgument, "thin must be >= 1");
  if (shuffle_size < 2) throw Error(ErrorCode::InvalidArgument, "shuffle size must be >= 2");
  if (!(sigma_omega_step > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_omega_step must be positive");
  if (sigma_omega_proposals < 0 || permutation_interval < 1)
    throw Error(ErrorCode::InvalidArgument, "proposal counts");
  KernelConfig{eta, match_mode}.validate();
}

json to_json(const McmcConfig& c) {
  return json{{"n_iter", c.n_iter},
              {"burn_in", c.burn_in},
              {"thin", c.thin},
              {"seed", c.seed},
              {"shuffle_size", c.shuffle_size},
              {"sigma_omega_step", c.sigma_omega_step},
              {"sigma_omega_proposals", c.sigma_omega_proposals},
              {"permutation_interval", c.permutation_interval},
              {"sigma_eps_mode", std::string(to_string(c.sigma_eps_mode))},
              {"eta", c.eta},
              {"match_mode", std::string(to_string(c.match_mode))},
              {"baseline_mode", std::string(to_string(c.baseline_mode))},
              {"updates",
               {{"partition", c.updates.partition},
                {"mass", c.updates.mass},
                {"permutation", c.updates.permutation},
                {"cluster_params", c.updates.cluster_params},
                {"hyperparams", c.updates.hyperparams},
                {"omega", c.updates.omega},
                {"sigma_omega", c.updates.sigma_omega},
                {"sigma_eps", c.updates.sigma_eps}}}};
}

McmcConfig mcmc_config_from_json(const json& j) {
  McmcConfig c;
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n_iter") c.n_iter = v.get<int>();
      else if (key == "burn_in") c.burn_in = v.get<int>();
      else if (key == "thin") c.thin = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "shuffle_size") c.shuffle_size = v.get<int>();
      else if (key == "sigma_omega_step") c.sigma_omega_step = v.get<double>();
      else if (key == "sigma_omega_proposals") c.sigma_omega_proposals = v.get<int>();
      else if (key == "permutation_interval") c.permutation_interval = v.get<int>();
      else if (key == "sigma_eps_mode") c.sigma_eps_mode = parse_sigma_eps_mode(v.get<std::string>());
      else if (key == "eta") c.eta = v.get<double>();
      else if (key == "match_mode") c.match_mode = parse_match_mode(v.get<std::string>());
      else if (key == "baseline_mode") c.baseline_mode = parse_baseline_mode(v.get<std::string>());
      else if (key == "updates") {
        auto& u = c.updates;
        for (const auto& [uk, uv] : v.items()) {
          bool* slot = uk == "partition"        ? &u.partition
                       : uk == "mass"           ? &u.mass
                       : uk == "permutation"    ? &u.permutation
                       : uk == "cluster_params" ? &u.cluster_params
                       : uk == "hyperparams"    ? &u.hyperparams
                       : uk == "omega"          ? &u.omega
                       : uk == "sigma_omega"    ? &u.sigma_omega
                       : uk == "sigma_eps"      ? &u.sigma_eps
                                                : nullptr;
          if (!slot) throw Error(ErrorCode::InvalidArgument, "unknown update flag '" + uk + "'");
          *slot = uv.get<bool>();
        }
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Draw records

Draw snapshot(const McmcState& state, int iteration) {
  Draw d;
  d.iteration = iteration;
  d.labels = canonical_labels(state.partition.labels());
  d.clusters.resize(state.clusters.size());
  for (std::size_t i = 0; i < d.labels.size(); ++i)
    d.clusters[static_cast<std::size_t>(d.labels[i])] = state.clusters[static_cast<std::size_t>(state.partition.label(i))];
  d.sigma_omega = state.noise.sigma_omega;
  d.sigma_eps2 = state.noise.sigma_eps2;
  d.m0 = state.m0;
  d.sigma = state.sigma;
  d.priors = state.priors;
  return d;
}

json to_json(const Draw& d) {
  json beta = json::array(), gamma = json::array();
  for (const auto& c : d.clusters) {
    beta.push_back(jsonio::matrix(c.beta));
    gamma.push_back(jsonio::matrix(c.gamma));
  }
  json e = json::array(), b = json::array(), f = json::array(), l = json::array();
  for (std::size_t q = 0; q < d.priors.e.size(); ++q) {
    e.push_back(jsonio::vector(d.priors.e[q]));
    b.push_back(jsonio::matrix(d.priors.b[q]));
    f.push_back(jsonio::vector(d.priors.f[q]));
    l.push_back(jsonio::matrix(d.priors.lambda[q]));
  }
  return json{{"iteration", d.iteration}, {"labels", d.labels},   {"beta", beta},
              {"gamma", gamma},           {"sigma_omega", jsonio::matrix(d.sigma_omega)},
              {"sigma_eps2", d.sigma_eps2}, {"m0", d.m0},          {"sigma", d.sigma},
              {"e", e},                   {"B", b},               {"f", f},
              {"Lambda", l}};
}

Draw draw_from_json(const json& j) {
  Draw d;
  try {
    d.iteration = j.at("iteration").get<int>();
    d.labels = j.at("labels").get<std::vector<int>>();
    const auto& beta = j.at("beta");
    const auto& gamma = j.at("gamma");
    if (beta.size() != gamma.size()) throw Error(ErrorCode::ParseError, "beta/gamma cluster counts differ");
    for (std::size_t k = 0; k < beta.size(); ++k) d.clusters.push_back({jsonio::to_matrix(beta[k]), jsonio::to_matrix(gamma[k])});
    d.sigma_omega = jsonio::to_matrix(j.at("sigma_omega"));
    d.sigma_eps2 = j.at("sigma_eps2").get<double>();
    d.m0 = j.at("m0").get<double>();
    d.sigma = j.at("sigma").get<std::vector<int>>();
    for (const auto& v : j.at("e")) d.priors.e.push_back(jsonio::to_vector(v));
    for (const auto& v : j.at("B")) d.priors.b.push_back(jsonio::to_matrix(v));
    for (const auto& v : j.at("f")) d.priors.f.push_back(jsonio::to_vector(v));
    for (const auto& v : j.at("Lambda")) d.priors.lambda.push_back(jsonio::to_matrix(v));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("draw record: ") + e.what());
  }
  const auto canon = canonical_labels(d.labels);
  if (canon != d.labels || static_cast<std::size_t>(Partition::from_labels(d.labels).num_clusters()) != d.clusters.size())
    throw Error(ErrorCode::ParseError, "draw labels inconsistent with cluster parameters");
  return d;
}

// ---------------------------------------------------------------------------
// Sampler

GibbsSampler::GibbsSampler(const ModelData& data, const Eigen::MatrixXd& similarity, Hyperparams hyper,
                           McmcConfig cfg)
    : data_(data), similarity_(similarity), hyper_(std::move(hyper)), cfg_(cfg) {
  cfg_.validate();
  hyper_.validate(data_.s(), data_.d_star());
  const auto n = static_cast<Eigen::Index>(data_.n());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "no individuals");
  if (cfg_.baseline_mode != BaselineMode::DdcrpSt) {
    similarity_ = Eigen::MatrixXd::Ones(n, n);
  } else if (similarity_.rows() != n || similarity_.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "similarity matrix must be n x n");
  }
  SimilarityContext ctx{similarity_, std::vector<int>(static_cast<std::size_t>(n)), 1.0};
  std::iota(ctx.sigma.begin(), ctx.sigma.end(), 0);
  ctx.validate();
  e0_prec_ = dist::inverse_spd(hyper_.e0_cov);
  f0_prec_ = dist::inverse_spd(hyper_.f0_cov);
}

ClusterParams GibbsSampler::draw_from_base(const LatentPriors& priors, Rng& rng) const {
  return BaseFactors(priors).draw(priors, rng);
}

McmcState GibbsSampler::initial_state(Rng& rng) const {
  const int q = data_.q();
  McmcState s;
  s.partition = Partition::singletons(data_.n());
  s.sigma.resize(data_.n());
  std::iota(s.sigma.begin(), s.sigma.end(), 0);
  std::shuffle(s.sigma.begin(), s.sigma.end(), rng);
  s.m0 = 1.0;
  s.priors = LatentPriors::identity(q, data_.s(), data_.d_star());
  s.noise.omega = Eigen::MatrixXd::Zero(q, static_cast<Eigen::Index>(data_.total_visits()));
  s.noise.sigma_omega = Eigen::MatrixXd::Identity(q, q);
  s.noise.sigma_eps2 = 1.0;
  s.clusters.assign(data_.n(), ClusterParams{Eigen::MatrixXd::Zero(q, data_.s()),
                                              Eigen::MatrixXd::Zero(q, data_.d_star())});
  update_cluster_params(s, rng);
  update_hyperparams(s, rng);
  return s;
}

void GibbsSampler::update_partition(McmcState& s, Rng& rng) const {
  const auto n = data_.n();
  if (n < 2) return;
  DdcrpSeating seat(similarity_, s.sigma, s.m0, s.partition);
  const BaseFactors base(s.priors);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> logw;
  for (const auto i : order) {
    const auto& b = data_.block(i);
    const Eigen::MatrixXd y_tilde = b.y - omega_block(s.noise, b);
    const auto& part = seat.partition();
    const int c = part.label(i);
    const int r = part.num_clusters();
    const bool single = part.size(c) == 1;
    // A singleton's own parameters act as the new-cluster candidate.
    ClusterParams aux = single ? s.clusters[static_cast<std::size_t>(c)] : base.draw(s.priors, rng);

    const auto prior = seat.move_log_weights(i);
    logw.assign(static_cast<std::size_t>(r) + 1, 0.0);
    for (int k = 0; k < r; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      logw[kk] = prior[kk] + block_loglik(y_tilde, b, s.clusters[kk], s.noise.sigma_eps2);
    }
    logw.back() = prior.back() + block_loglik(y_tilde, b, aux, s.noise.sigma_eps2);
    if (single) logw[static_cast<std::size_t>(c)] = kNegInf;

    const int k = static_cast<int>(dist::categorical_log(rng, logw));
    if (k == r) {
      if (single) continue;
      seat.move(i, r);
      s.clusters.push_back(std::move(aux));
    } else if (k != c) {
      const int removed = seat.move(i, k);
      if (removed >= 0) s.clusters.erase(s.clusters.begin() + removed);
    }
  }
  s.partition = seat.partition();
}

void GibbsSampler::update_mass(McmcState& s, Rng& rng) const {
  const double n = static_cast<double>(data_.n());
  const double r = s.partition.num_clusters();
  s.tau0 = dist::beta(rng, s.m0 + 1.0, n);
  const double rate = hyper_.d0 - std::log(s.tau0);
  const double w1 = hyper_.c0 + r - 1.0;
  const double w2 = n * rate;
  const bool first = dist::uniform(rng) * (w1 + w2) < w1;
  s.m0 = dist::gamma(rng, first ? hyper_.c0 + r : hyper_.c0 + r - 1.0, rate);
}

bool GibbsSampler::update_permutation(McmcState& s, Rng& rng) const {
  const auto n = s.sigma.size();
  if (n < 2) return false;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(cfg_.shuffle_size), n);
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (std::size_t t = 0; t < k; ++t) {
    const auto j = t + static_cast<std::size_t>(dist::uniform(rng) * static_cast<double>(n - t));
    std::swap(positions[t], positions[std::min(j, n - 1)]);
  }
  std::vector<int> values;
  for (std::size_t t = 0; t < k; ++t) values.push_back(s.sigma[positions[t]]);
  std::shuffle(values.begin(), values.end(), rng);
  SimilarityContext proposal{similarity_, s.sigma, s.m0};
  for (std::size_t t = 0; t < k; ++t) proposal.sigma[positions[t]] = values[t];

  const SimilarityContext current{similarity_, s.sigma, s.m0};
  const double log_ratio = ddcrp_log_pmf(s.partition, proposal) - ddcrp_log_pmf(s.partition, current);
  if (std::log(dist::uniform(rng)) < log_ratio) {
    s.sigma = std::move(proposal.sigma);
    return true;
  }
  return false;
}

void GibbsSampler::update_cluster_params(McmcState& s, Rng& rng) const {
  const int q = data_.q();
  const double prec = 1.0 / s.noise.sigma_eps2;
  std::vector<Eigen::MatrixXd> b_inv, l_inv;
  std::vector<Eigen::VectorXd> b_inv_e, l_inv_f;
  for (int k = 0; k < q; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    b_inv.push_back(dist::inverse_spd(s.priors.b[kk]));
    l_inv.push_back(dist::inverse_spd(s.priors.lambda[kk]));
    b_inv_e.push_back(b_inv.back() * s.priors.e[kk]);
    l_inv_f.push_back(l_inv.back() * s.priors.f[kk]);
  }
  const auto members = s.partition.members();
  const auto sd = data_.s();
  const auto dd = data_.d_star();
  for (std::size_t c = 0; c < members.size(); ++c) {
    Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(sd, sd), hh = Eigen::MatrixXd::Zero(dd, dd),
                    xh = Eigen::MatrixXd::Zero(sd, dd), xy = Eigen::MatrixXd::Zero(sd, q),
                    hy = Eigen::MatrixXd::Zero(dd, q);
    for (int i : members[c]) {
      const auto& b = data_.block(static_cast<std::size_t>(i));
      const Eigen::MatrixXd y_tilde = b.y - omega_block(s.noise, b);
      xx += b.xx;
      hh += b.hh;
      xh += b.xh;
      xy.noalias() += b.x * y_tilde.transpose();
      hy.noalias() += b.h * y_tilde.transpose();
    }
    auto& th = s.clusters[c];
    for (int k = 0; k < q; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const Eigen::MatrixXd pb = prec * xx + b_inv[kk];
      const Eigen::VectorXd bb = prec * (xy.col(k) - xh * th.gamma.row(k).transpose()) + b_inv_e[kk];
      th.beta.row(k) = dist::mvn_canonical(rng, bb, pb).transpose();
      const Eigen::MatrixXd pg = prec * hh + l_inv[kk];
      const Eigen::VectorXd bg = prec * (hy.col(k) - xh.transpose() * th.beta.row(k).transpose()) + l_inv_f[kk];
      th.gamma.row(k) = dist::mvn_canonical(rng, bg, pg).transpose();
    }
  }
}

void GibbsSampler::update_hyperparams(McmcState& s, Rng& rng) const {
  const int q = data_.q();
  const double r = static_cast<double>(s.clusters.size());
  for (int k = 0; k < q; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    {
      const Eigen::MatrixXd b_inv = dist::inverse_spd(s.priors.b[kk]);
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(data_.s());
      for (const auto& th : s.clusters) sum += th.beta.row(k).transpose();
      s.priors.e[kk] = dist::mvn_canonical(rng, b_inv * sum, e0_prec_ + r * b_inv);
      Eigen::MatrixXd scale = hyper_.b0_scale;
      for (const auto& th : s.clusters) {
        const Eigen::VectorXd dev = th.beta.row(k).transpose() - s.priors.e[kk];
        scale.noalias() += dev * dev.transpose();
      }
      s.priors.b[kk] = dist::inverse_wishart(rng, hyper_.b0 + r, scale);
    }
    {
      const Eigen::MatrixXd l_inv = dist::inverse_spd(s.priors.lambda[kk]);
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(data_.d_star());
      for (const auto& th : s.clusters) sum += th.gamma.row(k).transpose();
      s.priors.f[kk] = dist::mvn_canonical(rng, l_inv * sum, f0_prec_ + r * l_inv);
      Eigen::MatrixXd scale = hyper_.lambda0_scale;
      for (const auto& th : s.clusters) {
        const Eigen::VectorXd dev = th.gamma.row(k).transpose() - s.priors.f[kk];
        scale.noalias() += dev * dev.transpose();
      }
      s.priors.lambda[kk] = dist::inverse_wishart(rng, hyper_.lambda0 + r, scale);
    }
  }
}

void GibbsSampler::update_omega(McmcState& s, Rng& rng) const {
  const int q = data_.q();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(q, q);
  // Posterior covariance sigma^2 (I + Sigma^-1)^-1, mean (I + Sigma^-1)^-1 r.
  const Eigen::MatrixXd m = dist::inverse_spd(id + dist::inverse_spd(s.noise.sigma_omega));
  const Eigen::MatrixXd l = lower_chol(m);
  const double sd = std::sqrt(s.noise.sigma_eps2);
  for (std::size_t i = 0; i < data_.n(); ++i) {
    const auto& b = data_.block(i);
    const auto& th = s.clusters[static_cast<std::size_t>(s.partition.label(i))];
    const Eigen::MatrixXd resid = b.y - th.beta * b.x - th.gamma * b.h;
    for (Eigen::Index j = 0; j < b.visits(); ++j) {
      const Eigen::VectorXd z = dist::standard_normal_vector(rng, q);
      s.noise.omega.col(static_cast<Eigen::Index>(b.first_visit) + j) = m * resid.col(j) + sd * (l * z);
    }
  }
}

double GibbsSampler::sigma_omega_log_target(const Eigen::MatrixXd& corr, const Eigen::MatrixXd& scatter,
                                            double sigma_eps2) const {
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) return kNegInf;
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double nv = static_cast<double>(data_.total_visits());
  const double trace = llt.solve(scatter).trace();
  return log_det - 0.5 * nv * log_det - 0.5 * trace / sigma_eps2;
}

bool GibbsSampler::update_sigma_omega(McmcState& s, Rng& rng) const {
  const int q = data_.q();
  if (q < 2) return false;
  const Eigen::MatrixXd scatter = s.noise.omega * s.noise.omega.transpose();
  const int pairs = q * (q - 1) / 2;
  int pick = std::min(pairs - 1, static_cast<int>(dist::uniform(rng) * pairs));
  int a = 1, b = 0;
  for (a = 1; a < q; ++a) {
    if (pick < a) {
      b = pick;
      break;
    }
    pick -= a;
  }
  Eigen::MatrixXd prop = s.noise.sigma_omega;
  const double rho = prop(a, b) + dist::uniform(rng, -cfg_.sigma_omega_step, cfg_.sigma_omega_step);
  if (!(std::abs(rho) < 1.0)) return false;
  prop(a, b) = prop(b, a) = rho;
  const double target_new = sigma_omega_log_target(prop, scatter, s.noise.sigma_eps2);
  if (target_new == kNegInf) return false;
  const double target_old = sigma_omega_log_target(s.noise.sigma_omega, scatter, s.noise.sigma_eps2);
  if (std::log(dist::uniform(rng)) < target_new - target_old) {
    s.noise.sigma_omega = std::move(prop);
    return true;
  }
  return false;
}

double GibbsSampler::residual_sum_squares(const McmcState& s) const {
  double ss = 0.0;
  for (std::size_t i = 0; i < data_.n(); ++i) {
    const auto& b = data_.block(i);
    const auto& th = s.clusters[static_cast<std::size_t>(s.partition.label(i))];
    ss += (b.y - th.beta * b.x - th.gamma * b.h - omega_block(s.noise, b)).squaredNorm();
  }
  return ss;
}

void GibbsSampler::update_sigma_eps(McmcState& s, Rng& rng) const {
  const double nq = static_cast<double>(data_.total_visits()) * data_.q();
  const double ss = residual_sum_squares(s);
  double shape = hyper_.g1 + 0.5 * nq;
  double rate = hyper_.g2 + 0.5 * ss;
  if (cfg_.sigma_eps_mode == SigmaEpsMode::Consistent) {
    const Eigen::MatrixXd scatter = s.noise.omega * s.noise.omega.transpose();
    shape += 0.5 * nq;
    rate += 0.5 * dist::inverse_spd(s.noise.sigma_omega).cwiseProduct(scatter).sum();
  }
  s.noise.sigma_eps2 = dist::inverse_gamma(rng, shape, rate);
}

void GibbsSampler::sweep(McmcState& s, Rng& rng, int iteration, AcceptanceCounter& perm,
                         AcceptanceCounter& so) const {
  const auto& u = cfg_.updates;
  if (mixture()) {
    if (u.partition) update_partition(s, rng);
    if (u.mass) update_mass(s, rng);
    if (u.permutation && iteration % cfg_.permutation_interval == 0 && data_.n() > 1) {
      ++perm.proposed;
      if (update_permutation(s, rng)) ++perm.accepted;
    }
  }
  if (u.cluster_params) update_cluster_params(s, rng);
  if (u.hyperparams) update_hyperparams(s, rng);
  if (u.omega) update_omega(s, rng);
  if (u.sigma_omega && data_.q() > 1) {
    for (int p = 0; p < cfg_.sigma_omega_proposals; ++p) {
      ++so.proposed;
      if (update_sigma_omega(s, rng)) ++so.accepted;
    }
  }
  if (u.sigma_eps) update_sigma_eps(s, rng);
}

ChainOutput run_chain(const GibbsSampler& sampler, const ProgressFn& progress) {
  const auto& cfg = sampler.config();
  ChainOutput out;
  out.config = cfg;
  Rng rng(cfg.seed);
  McmcState state = sampler.initial_state(rng);
  out.draws.reserve(static_cast<std::size_t>(cfg.expected_draws()));
  for (int it = 1; it <= cfg.n_iter; ++it) {
    sampler.sweep(state, rng, it, out.permutation, out.sigma_omega);
    if (!std::isfinite(state.noise.sigma_eps2) || !std::isfinite(state.m0) || !state.noise.omega.allFinite())
      throw Error(ErrorCode::NonFiniteLikelihood, "non-finite sampler state at iteration " + std::to_string(it));
    if (it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) out.draws.push_back(snapshot(state, it));
    if (progress) progress(it);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void write_chain(const ChainOutput& chain, const std::filesystem::path& dir, const json& extra_meta) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "draws.jsonl");
    if (!out) throw Error(ErrorCode::IoError, (dir / "draws.jsonl").string());
    for (const auto& d : chain.draws) out << to_json(d).dump() << '\n';
  }
  json meta = extra_meta.is_object() ? extra_meta : json::object();
  meta["config"] = to_json(chain.config);
  meta["seed"] = chain.config.seed;
  meta["draw_count"] = chain.draws.size();
  meta["acceptance"] = {{"permutation", {{"proposed", chain.permutation.proposed},
                                         {"accepted", chain.permutation.accepted},
                                         {"rate", chain.permutation.rate()}}},
                        {"sigma_omega", {{"proposed", chain.sigma_omega.proposed},
                                         {"accepted", chain.sigma_omega.accepted},
                                         {"rate", chain.sigma_omega.rate()}}}};
  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw Error(ErrorCode::IoError, (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  std::ofstream out(dir / "assignments.csv");
  if (!out) throw Error(ErrorCode::IoError, (dir / "assignments.csv").string());
  const std::size_t n = chain.draws.empty() ? 0 : chain.draws.front().labels.size();
  std::vector<std::string> ids;
  if (meta.contains("individual_ids")) ids = meta["individual_ids"].get<std::vector<std::string>>();
  out << "draw,iteration";
  for (std::size_t i = 0; i < n; ++i) out << ',' << (i < ids.size() ? ids[i] : std::to_string(i));
  out << '\n';
  for (std::size_t d = 0; d < chain.draws.size(); ++d) {
    out << d << ',' << chain.draws[d].iteration;
    for (int l : chain.draws[d].labels) out << ',' << l;
    out << '\n';
  }
}

ChainOutput read_chain(const std::filesystem::path& dir) {
  ChainOutput chain;
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw Error(ErrorCode::IoError, "cannot open " + (dir / "meta.json").string());
  json meta;
  try {
    meta = json::parse(meta_in);
    chain.config = mcmc_config_from_json(meta.at("config"));
    const auto& acc = meta.at("acceptance");
    chain.permutation = {acc.at("permutation").at("proposed").get<long>(), acc.at("permutation").at("accepted").get<long>()};
    chain.sigma_omega = {acc.at("sigma_omega").at("proposed").get<long>(), acc.at("sigma_omega").at("accepted").get<long>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("meta.json: ") + e.what());
  }
  std::ifstream in(dir / "draws.jsonl");
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + (dir / "draws.jsonl").string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      chain.draws.push_back(draw_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("draws.jsonl: ") + e.what());
    }
  }
  return chain;
}

}  // namespace drugcomb

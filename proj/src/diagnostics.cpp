#include "drugcomb/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"

namespace drugcomb {

namespace {

void require_draws(const ChainOutput& chain) {
  if (chain.draws.empty()) throw Error(ErrorCode::EmptyChain, "chain has no stored draws");
}

double mean_of(std::span<const double> x) {
  return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sd_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

std::vector<double> autocovariance(std::span<const double> x, int max_lag) {
  const auto n = x.size();
  const double m = mean_of(x);
  std::vector<double> out(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int k = 0; k <= max_lag && static_cast<std::size_t>(k) < n; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t + static_cast<std::size_t>(k) < n; ++t) acc += (x[t] - m) * (x[t + static_cast<std::size_t>(k)] - m);
    out[static_cast<std::size_t>(k)] = acc / static_cast<double>(n);
  }
  return out;
}

std::string rho_name(int a, int b) { return "rho_" + std::to_string(b + 1) + "_" + std::to_string(a + 1); }

}  // namespace

// ---------------------------------------------------------------------------
// Scalar summaries

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::EmptyChain, "quantile of no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> autocorrelation(std::span<const double> x, int max_lag) {
  const auto cov = autocovariance(x, max_lag);
  std::vector<double> out;
  for (int k = 1; k <= max_lag; ++k) out.push_back(cov[0] > 0.0 ? cov[static_cast<std::size_t>(k)] / cov[0] : 0.0);
  return out;
}

double effective_sample_size(std::span<const double> x) {
  const auto n = x.size();
  if (n < 4) return static_cast<double>(n);
  const auto cov = autocovariance(x, static_cast<int>(n) - 1);
  if (!(cov[0] > 0.0)) return static_cast<double>(n);
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = cov[2 * m] + cov[2 * m + 1];
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double var = -cov[0] + 2.0 * sum;
  if (!(var > 0.0)) return static_cast<double>(n);
  return std::min(static_cast<double>(n), static_cast<double>(n) * cov[0] / var);
}

ScalarSummary summarize(std::string name, std::span<const double> draws, double level, int max_lag) {
  if (draws.empty()) throw Error(ErrorCode::EmptyChain, name);
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0,1)");
  ScalarSummary s;
  s.name = std::move(name);
  s.level = level;
  s.mean = mean_of(draws);
  s.sd = sd_of(draws);
  const std::vector<double> v(draws.begin(), draws.end());
  s.lower = quantile(v, 0.5 * (1.0 - level));
  s.upper = quantile(v, 0.5 * (1.0 + level));
  s.ess = effective_sample_size(draws);
  s.acf = autocorrelation(draws, std::min<int>(max_lag, static_cast<int>(draws.size()) - 1));
  return s;
}

std::map<std::string, std::vector<double>> scalar_series(const ChainOutput& chain) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& d : chain.draws) {
    out["sigma_eps2"].push_back(d.sigma_eps2);
    out["m0"].push_back(d.m0);
    out["r_n"].push_back(d.num_clusters());
    for (Eigen::Index a = 1; a < d.sigma_omega.rows(); ++a)
      for (Eigen::Index b = 0; b < a; ++b)
        out[rho_name(static_cast<int>(a), static_cast<int>(b))].push_back(d.sigma_omega(a, b));
  }
  return out;
}

std::vector<ScalarSummary> credible_intervals(const ChainOutput& chain, double level) {
  require_draws(chain);
  std::vector<ScalarSummary> out;
  for (const auto& [name, series] : scalar_series(chain)) out.push_back(summarize(name, series, level));
  return out;
}

// ---------------------------------------------------------------------------
// Clustering summaries

Eigen::MatrixXd coclustering_matrix(const ChainOutput& chain) {
  require_draws(chain);
  const auto n = static_cast<Eigen::Index>(chain.draws.front().labels.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (const auto& d : chain.draws)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (d.labels[static_cast<std::size_t>(i)] == d.labels[static_cast<std::size_t>(j)]) m(i, j) += 1.0;
  m /= static_cast<double>(chain.draws.size());
  m.diagonal().setOnes();
  return m;
}

std::map<int, double> cluster_count_posterior(const ChainOutput& chain) {
  require_draws(chain);
  std::map<int, long> counts;
  for (const auto& d : chain.draws) ++counts[d.num_clusters()];
  std::map<int, double> out;
  for (const auto& [r, c] : counts) out[r] = static_cast<double>(c) / static_cast<double>(chain.draws.size());
  return out;
}

std::vector<int> least_squares_clustering(const ChainOutput& chain) {
  const Eigen::MatrixXd pi = coclustering_matrix(chain);
  const auto n = pi.rows();
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t k = 0; k < chain.draws.size(); ++k) {
    const auto& l = chain.draws[k].labels;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < i; ++j) {
        const double same = l[static_cast<std::size_t>(i)] == l[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
        loss += (same - pi(i, j)) * (same - pi(i, j));
      }
    if (loss < best) {
      best = loss;
      arg = k;
    }
  }
  return chain.draws[arg].labels;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "label vectors differ in length");
  const auto ca = canonical_labels(a);
  const auto cb = canonical_labels(b);
  const int ra = ca.empty() ? 0 : *std::max_element(ca.begin(), ca.end()) + 1;
  const int rb = cb.empty() ? 0 : *std::max_element(cb.begin(), cb.end()) + 1;
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ra, rb);
  for (std::size_t i = 0; i < ca.size(); ++i) table(ca[i], cb[i]) += 1.0;
  auto choose2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (Eigen::Index i = 0; i < ra; ++i)
    for (Eigen::Index j = 0; j < rb; ++j) index += choose2(table(i, j));
  for (Eigen::Index i = 0; i < ra; ++i) sum_a += choose2(table.row(i).sum());
  for (Eigen::Index j = 0; j < rb; ++j) sum_b += choose2(table.col(j).sum());
  const double total = choose2(static_cast<double>(ca.size()));
  const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both trivial partitions
  return (index - expected) / (max_index - expected);
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(cost.rows());
  const auto m = static_cast<int>(cost.cols());
  if (n > m) throw Error(ErrorCode::InvalidArgument, "hungarian needs rows <= cols");
  // Shortest augmenting path with potentials, 1-based helper arrays.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<std::size_t>(j)] != 0) assign[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return assign;
}

namespace {

Eigen::MatrixXd overlap(std::span<const int> draw_labels, std::span<const int> truth_labels) {
  if (draw_labels.size() != truth_labels.size()) throw Error(ErrorCode::DimensionMismatch, "label vectors");
  const int rd = *std::max_element(draw_labels.begin(), draw_labels.end()) + 1;
  const int rt = *std::max_element(truth_labels.begin(), truth_labels.end()) + 1;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(rt, rd);
  for (std::size_t i = 0; i < draw_labels.size(); ++i) c(truth_labels[i], draw_labels[i]) += 1.0;
  return c;
}

}  // namespace

std::vector<int> match_clusters(std::span<const int> draw_labels, std::span<const int> truth_labels) {
  const Eigen::MatrixXd c = overlap(draw_labels, truth_labels);
  if (c.rows() > c.cols())
    throw Error(ErrorCode::LabelMatchFailure, std::to_string(c.cols()) + " draw clusters for " +
                                                  std::to_string(c.rows()) + " true clusters");
  return hungarian(-c);
}

std::vector<int> match_clusters_or_majority(std::span<const int> draw_labels, std::span<const int> truth_labels) {
  try {
    return match_clusters(draw_labels, truth_labels);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::LabelMatchFailure) throw;
  }
  const Eigen::MatrixXd c = overlap(draw_labels, truth_labels);
  std::vector<int> out;
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    Eigen::Index arg = 0;
    c.row(k).maxCoeff(&arg);
    out.push_back(static_cast<int>(arg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Truth comparisons

std::vector<EntryError> beta_vs_truth(const ChainOutput& chain, const GroundTruth& truth, double level) {
  require_draws(chain);
  const int r = truth.num_clusters();
  const auto q = truth.clusters.front().beta.rows();
  const auto s = truth.clusters.front().beta.cols();
  std::vector<std::vector<double>> values(static_cast<std::size_t>(r * q * s));
  for (const auto& d : chain.draws) {
    const auto match = match_clusters_or_majority(d.labels, truth.labels);
    for (int k = 0; k < r; ++k) {
      const auto& b = d.clusters[static_cast<std::size_t>(match[static_cast<std::size_t>(k)])].beta;
      if (b.rows() != q || b.cols() != s) throw Error(ErrorCode::DimensionMismatch, "beta vs truth");
      for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index c = 0; c < s; ++c) values[static_cast<std::size_t>((k * q + a) * s + c)].push_back(b(a, c));
    }
  }
  std::vector<EntryError> out;
  for (int k = 0; k < r; ++k)
    for (Eigen::Index a = 0; a < q; ++a)
      for (Eigen::Index c = 0; c < s; ++c) {
        const auto& v = values[static_cast<std::size_t>((k * q + a) * s + c)];
        EntryError e;
        e.cluster = k;
        e.item = static_cast<int>(a);
        e.column = static_cast<int>(c);
        e.truth = truth.clusters[static_cast<std::size_t>(k)].beta(a, c);
        double se = 0.0;
        for (double x : v) se += (x - e.truth) * (x - e.truth);
        e.mse = se / static_cast<double>(v.size());
        e.mean = mean_of(v);
        e.lower = quantile(v, 0.5 * (1.0 - level));
        e.upper = quantile(v, 0.5 * (1.0 + level));
        e.covered = e.lower <= e.truth && e.truth <= e.upper;
        out.push_back(e);
      }
  return out;
}

double combination_effect_mse(const ChainOutput& chain, const Eigen::MatrixXd& fitted_features,
                              const GroundTruth& truth, const Eigen::MatrixXd& true_features,
                              std::span<const std::size_t> visits_per_individual) {
  require_draws(chain);
  const auto total = std::accumulate(visits_per_individual.begin(), visits_per_individual.end(), std::size_t{0});
  if (static_cast<std::size_t>(fitted_features.rows()) != total || static_cast<std::size_t>(true_features.rows()) != total ||
      visits_per_individual.size() != truth.labels.size())
    throw Error(ErrorCode::DimensionMismatch, "feature rows vs visits");
  // True effects do not depend on the draw.
  const auto q = truth.clusters.front().gamma.rows();
  Eigen::MatrixXd true_effect(q, static_cast<Eigen::Index>(total));
  {
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < visits_per_individual.size(); ++i) {
      const auto& g = truth.clusters[static_cast<std::size_t>(truth.labels[i])].gamma;
      for (std::size_t j = 0; j < visits_per_individual[i]; ++j, ++row)
        true_effect.col(row) = g * true_features.row(row).transpose();
    }
  }
  double ss = 0.0;
  for (const auto& d : chain.draws) {
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < visits_per_individual.size(); ++i) {
      const auto& g = d.params_of(i).gamma;
      const auto j = static_cast<Eigen::Index>(visits_per_individual[i]);
      const Eigen::MatrixXd est = g * fitted_features.middleRows(row, j).transpose();
      ss += (est - true_effect.middleCols(row, j)).squaredNorm();
      row += j;
    }
  }
  return ss / (static_cast<double>(chain.draws.size()) * static_cast<double>(total) * static_cast<double>(q));
}

// ---------------------------------------------------------------------------
// Export

void write_trace_csv(std::ostream& out, const ChainOutput& chain) {
  const auto series = scalar_series(chain);
  out << "draw,iteration";
  for (const auto& [name, _] : series) out << ',' << name;
  out << '\n';
  const auto old = out.precision(17);
  for (std::size_t d = 0; d < chain.draws.size(); ++d) {
    out << d << ',' << chain.draws[d].iteration;
    for (const auto& [_, v] : series) out << ',' << v[d];
    out << '\n';
  }
  out.precision(old);
}

void write_acf_csv(std::ostream& out, const ChainOutput& chain, int max_lag) {
  const auto series = scalar_series(chain);
  out << "parameter,lag,acf\n";
  for (const auto& [name, v] : series) {
    const auto acf = autocorrelation(v, std::min<int>(max_lag, static_cast<int>(v.size()) - 1));
    for (std::size_t k = 0; k < acf.size(); ++k) out << name << ',' << k + 1 << ',' << acf[k] << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const ScalarSummary> rows) {
  out << "parameter,mean,sd,lower,upper,level,ess\n";
  for (const auto& r : rows)
    out << r.name << ',' << r.mean << ',' << r.sd << ',' << r.lower << ',' << r.upper << ',' << r.level << ',' << r.ess << '\n';
}

nlohmann::json summary_json(const ChainOutput& chain, double level) {
  using nlohmann::json;
  json j;
  j["draws"] = chain.draws.size();
  j["level"] = level;
  json counts = json::object();
  for (const auto& [r, p] : cluster_count_posterior(chain)) counts[std::to_string(r)] = p;
  j["cluster_count_posterior"] = counts;
  json rows = json::array();
  for (const auto& s : credible_intervals(chain, level))
    rows.push_back({{"parameter", s.name}, {"mean", s.mean}, {"sd", s.sd}, {"lower", s.lower},
                    {"upper", s.upper}, {"ess", s.ess}, {"acf", s.acf}});
  j["parameters"] = rows;
  j["least_squares_clustering"] = least_squares_clustering(chain);
  j["acceptance"] = {{"permutation", chain.permutation.rate()}, {"sigma_omega", chain.sigma_omega.rate()}};
  return j;
}

// ---------------------------------------------------------------------------
// Joint-distribution test

Hyperparams geweke_hyperparams(int s, int d_star) {
  Hyperparams h;
  h.c0 = 2.0;
  h.d0 = 2.0;
  h.g1 = 5.0;
  h.g2 = 4.0;
  h.e0_cov = Eigen::MatrixXd::Identity(s, s);
  h.b0 = s + 4;
  h.b0_scale = 3.0 * Eigen::MatrixXd::Identity(s, s);
  h.f0_cov = Eigen::MatrixXd::Identity(d_star, d_star);
  h.lambda0 = d_star + 4;
  h.lambda0_scale = 3.0 * Eigen::MatrixXd::Identity(d_star, d_star);
  return h;
}

double GewekeReport::fraction_within(double z) const {
  if (moments.empty()) return 0.0;
  const auto ok = std::count_if(moments.begin(), moments.end(), [z](const GewekeMoment& m) { return std::abs(m.z) < z; });
  return static_cast<double>(ok) / static_cast<double>(moments.size());
}

bool GewekeReport::flagged(double z) const {
  return std::any_of(moments.begin(), moments.end(), [z](const GewekeMoment& m) { return std::abs(m.z) > z; });
}

GewekeReport geweke_joint_test(const GewekeConfig& cfg) {
  GewekeReport report;
  if (cfg.iterations <= 0 || cfg.marginal_draws <= 0 || cfg.batches < 2 || cfg.iterations < cfg.batches) {
    report.inconclusive = true;
    return report;
  }
  Rng rng(cfg.seed);
  const int q = cfg.q, s = cfg.s, dd = cfg.d_star;

  std::vector<IndividualBlock> blocks;
  for (int i = 0; i < cfg.n; ++i) {
    IndividualBlock b;
    b.y = Eigen::MatrixXd::Zero(q, cfg.visits);
    b.x.resize(s, cfg.visits);
    b.h.resize(dd, cfg.visits);
    for (int j = 0; j < cfg.visits; ++j) {
      b.x(0, j) = 1.0;
      for (int k = 1; k < s; ++k) b.x(k, j) = dist::normal(rng);
      for (int k = 0; k < dd; ++k) b.h(k, j) = 0.5 * dist::normal(rng);
    }
    blocks.push_back(std::move(b));
  }
  ModelData data(q, s, dd, std::move(blocks));
  Eigen::MatrixXd sim(cfg.n, cfg.n);
  for (int a = 0; a < cfg.n; ++a) {
    sim(a, a) = 1.0;
    for (int b = 0; b < a; ++b) sim(a, b) = sim(b, a) = dist::uniform(rng, 0.2, 1.0);
  }
  const Hyperparams hp = geweke_hyperparams(s, dd);
  McmcConfig mc;
  mc.n_iter = 1;
  mc.burn_in = 0;
  mc.sigma_eps_mode = cfg.sigma_eps_mode;
  mc.sigma_omega_step = cfg.sigma_omega_step;
  const GibbsSampler sampler(data, sim, hp, mc);

  auto draw_prior = [&](Rng& g) {
    McmcState st;
    st.m0 = dist::gamma(g, hp.c0, hp.d0);
    st.sigma.resize(static_cast<std::size_t>(cfg.n));
    std::iota(st.sigma.begin(), st.sigma.end(), 0);
    std::shuffle(st.sigma.begin(), st.sigma.end(), g);
    st.partition = ddcrp_sample(SimilarityContext{sim, st.sigma, st.m0}, g);
    for (int k = 0; k < q; ++k) {
      st.priors.e.push_back(dist::mvn(g, Eigen::VectorXd::Zero(s), hp.e0_cov));
      st.priors.b.push_back(dist::inverse_wishart(g, hp.b0, hp.b0_scale));
      st.priors.f.push_back(dist::mvn(g, Eigen::VectorXd::Zero(dd), hp.f0_cov));
      st.priors.lambda.push_back(dist::inverse_wishart(g, hp.lambda0, hp.lambda0_scale));
    }
    for (int k = 0; k < st.partition.num_clusters(); ++k) st.clusters.push_back(sampler.draw_from_base(st.priors, g));
    st.noise.sigma_omega = dist::lkj_correlation(g, q, 2.0);
    st.noise.sigma_eps2 = dist::inverse_gamma(g, hp.g1, hp.g2);
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(st.noise.sigma_eps2 * st.noise.sigma_omega).matrixL();
    st.noise.omega.resize(q, static_cast<Eigen::Index>(data.total_visits()));
    for (Eigen::Index v = 0; v < st.noise.omega.cols(); ++v) st.noise.omega.col(v) = l * dist::standard_normal_vector(g, q);
    return st;
  };
  auto simulate_outcomes = [&](const McmcState& st, Rng& g) {
    const double sd = std::sqrt(st.noise.sigma_eps2);
    for (std::size_t i = 0; i < data.n(); ++i) {
      const auto& b = data.block(i);
      const auto& th = st.clusters[static_cast<std::size_t>(st.partition.label(i))];
      Eigen::MatrixXd y = th.beta * b.x + th.gamma * b.h +
                          st.noise.omega.middleCols(static_cast<Eigen::Index>(b.first_visit), b.visits());
      for (Eigen::Index v = 0; v < y.size(); ++v) y.data()[v] += sd * dist::normal(g);
      data.replace_outcomes(i, y);
    }
  };
  const std::vector<std::string> names = {"sigma_eps2", "m0", "beta_1_1_of_first", "rho_1_2"};
  auto tracked = [&](const McmcState& st) {
    return std::array<double, 4>{st.noise.sigma_eps2, st.m0,
                                 st.clusters[static_cast<std::size_t>(st.partition.label(0))].beta(0, 0),
                                 st.noise.sigma_omega(1, 0)};
  };

  // Marginal-conditional simulation: independent prior draws.
  std::vector<std::vector<double>> marginal(8), successive(8);
  for (int m = 0; m < cfg.marginal_draws; ++m) {
    const auto t = tracked(draw_prior(rng));
    for (std::size_t k = 0; k < 4; ++k) {
      marginal[k].push_back(t[k]);
      marginal[k + 4].push_back(t[k] * t[k]);
    }
  }
  // Successive-conditional simulation: sampler sweep, then fresh outcomes.
  McmcState st = draw_prior(rng);
  simulate_outcomes(st, rng);
  AcceptanceCounter perm, so;
  for (int it = 1; it <= cfg.iterations; ++it) {
    sampler.sweep(st, rng, it, perm, so);
    simulate_outcomes(st, rng);
    const auto t = tracked(st);
    for (std::size_t k = 0; k < 4; ++k) {
      successive[k].push_back(t[k]);
      successive[k + 4].push_back(t[k] * t[k]);
    }
  }

  for (std::size_t k = 0; k < 8; ++k) {
    GewekeMoment m;
    m.name = (k < 4 ? "E[" : "E[sq ") + names[k % 4] + "]";
    m.marginal_mean = mean_of(marginal[k]);
    m.marginal_se = sd_of(marginal[k]) / std::sqrt(static_cast<double>(marginal[k].size()));
    m.successive_mean = mean_of(successive[k]);
    const auto batch = successive[k].size() / static_cast<std::size_t>(cfg.batches);
    std::vector<double> means;
    for (int b = 0; b < cfg.batches; ++b)
      means.push_back(mean_of(std::span<const double>(successive[k]).subspan(static_cast<std::size_t>(b) * batch, batch)));
    m.successive_se = sd_of(means) / std::sqrt(static_cast<double>(cfg.batches));
    const double se = std::sqrt(m.marginal_se * m.marginal_se + m.successive_se * m.successive_se);
    m.z = se > 0.0 ? (m.marginal_mean - m.successive_mean) / se : 0.0;
    report.moments.push_back(m);
  }
  return report;
}

}  // namespace drugcomb

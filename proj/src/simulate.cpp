#include "drugcomb/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "drugcomb/error.hpp"
#include "json_util.hpp"

namespace drugcomb {

namespace {

using nlohmann::json;

int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<std::string> pick_distinct(const std::vector<std::string>& pool, int k, Rng& rng) {
  std::vector<std::string> out = pool;
  std::shuffle(out.begin(), out.end(), rng);
  out.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(out.size()))));
  return out;
}

std::vector<Regimen> make_catalogue(const DrugDictionary& dict, int size, Rng& rng) {
  std::map<DrugClass, std::vector<std::string>> by_class;
  for (const auto& e : dict.entries()) by_class[e.drug_class].push_back(e.code);
  const auto& nrti = by_class[DrugClass::NRTI];
  if (nrti.empty()) throw Error(ErrorCode::InvalidDictionary, "synthetic histories need at least one NRTI");
  const bool has_rtv = dict.find("RTV") != nullptr;
  std::vector<std::string> pis;
  for (const auto& c : by_class[DrugClass::PI])
    if (c != "RTV") pis.push_back(c);

  std::set<Regimen> seen;
  std::vector<Regimen> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < size && attempts++ < 100 * size) {
    const double u = dist::uniform(rng);
    std::vector<std::string> drugs = pick_distinct(nrti, nrti.size() >= 2 ? 2 : 1, rng);
    auto add_one = [&](DrugClass c) {
      const auto& pool = c == DrugClass::PI ? pis : by_class[c];
      if (pool.empty()) return false;
      drugs.push_back(pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))]);
      return true;
    };
    bool ok = true;
    if (u < 0.35) {
      ok = add_one(DrugClass::NNRTI);
    } else if (u < 0.55) {
      ok = add_one(DrugClass::PI);
    } else if (u < 0.75) {
      ok = add_one(DrugClass::PI) && has_rtv;
      if (ok) drugs.push_back("RTV");
    } else if (u < 0.9) {
      ok = add_one(DrugClass::INSTI);
    } else {
      // Irregular combinations: NRTI-only, or NRTIs plus an entry inhibitor.
      drugs = pick_distinct(nrti, uniform_int(rng, 1, 3), rng);
      if (dist::uniform(rng) < 0.5) add_one(DrugClass::EI);
    }
    if (!ok) continue;
    std::sort(drugs.begin(), drugs.end());
    drugs.erase(std::unique(drugs.begin(), drugs.end()), drugs.end());
    if (drugs.size() > 4) drugs.resize(4);
    Regimen reg = make_regimen(drugs, dict);
    if (seen.insert(reg).second) out.push_back(std::move(reg));
  }
  return out;
}

}  // namespace

std::vector<TreatmentRecord> generate_histories(int pool_size, int max_len, const DrugDictionary& dict,
                                                Rng& rng, const HistoryOptions& opts) {
  if (pool_size < 1 || max_len < 1) throw Error(ErrorCode::InvalidArgument, "pool_size and max_len must be >= 1");
  const auto catalogue = make_catalogue(dict, opts.catalogue_size, rng);
  std::vector<double> log_pop(catalogue.size());
  for (std::size_t c = 0; c < catalogue.size(); ++c) log_pop[c] = -opts.popularity_decay * std::log(static_cast<double>(c + 1));

  const int lo = std::min(opts.min_len, max_len);
  std::vector<TreatmentRecord> out;
  for (int i = 0; i < pool_size; ++i) {
    TreatmentRecord rec;
    rec.owner = "P" + std::to_string(i + 1);
    const int len = uniform_int(rng, lo, max_len);
    std::size_t current = dist::categorical_log(rng, log_pop);
    for (int j = 0; j < len; ++j) {
      if (j > 0 && catalogue.size() > 1 && dist::uniform(rng) < opts.switch_prob) {
        std::size_t next = current;
        while (next == current) next = dist::categorical_log(rng, log_pop);
        current = next;
      }
      rec.visits.push_back(catalogue[current]);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void SimConfig::validate() const {
  if (n < 2 || q < 1 || s < 1) throw Error(ErrorCode::InvalidArgument, "need n >= 2, Q >= 1, S >= 1");
  KernelConfig{eta_true, match_mode}.validate();
  if (!(sigma_eps2_true > 0.0) || !(m0_true > 0.0)) throw Error(ErrorCode::InvalidArgument, "variances must be positive");
  if (!fixed_partition.empty() && static_cast<int>(fixed_partition.size()) != n)
    throw Error(ErrorCode::DimensionMismatch, "fixed partition length must equal n");
  if (history_source == HistorySource::PoolFile && pool_file.empty())
    throw Error(ErrorCode::InvalidArgument, "pool_file mode needs a path");
  correlation_from_offdiag(q, correlation_offdiag);
}

Eigen::MatrixXd correlation_from_offdiag(int q, const std::vector<double>& upper) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(q, q);
  if (upper.empty()) return m;
  if (static_cast<int>(upper.size()) != q * (q - 1) / 2)
    throw Error(ErrorCode::DimensionMismatch, "correlation_offdiag needs Q(Q-1)/2 entries");
  std::size_t k = 0;
  for (int a = 0; a < q; ++a)
    for (int b = a + 1; b < q; ++b) m(a, b) = m(b, a) = upper[k++];
  if (!is_correlation_matrix(m))
    throw Error(ErrorCode::InvalidArgument, "correlation_offdiag does not define a correlation matrix");
  return m;
}

std::vector<Eigen::MatrixXd> table_s1_beta() {
  const double v[3][3][3] = {
      {{0.4201738, -1.5065858, 0.4573016}, {0.1002570, 0.3885576, -2.5187332}, {0.8705657, -0.3111586, -0.5348084}},
      {{-1.2951632, -0.07094494, -0.7004121}, {-0.8044954, 0.12646919, -0.3280640}, {1.3418530, -0.98949773, -0.3472228}},
      {{0.4265138, -0.2214469, 0.1368007}, {-0.3282160, -2.4289411, -0.5135745}, {0.5458084, 1.7959664, 0.7342632}}};
  std::vector<Eigen::MatrixXd> out;
  for (const auto& k : v) {
    Eigen::MatrixXd b(3, 3);
    for (int q = 0; q < 3; ++q)
      for (int s = 0; s < 3; ++s) b(q, s) = k[q][s];
    out.push_back(b);
  }
  return out;
}

SimulatedData generate_dataset(const SimConfig& cfg, const DrugDictionary& dict) {
  cfg.validate();
  Rng rng(cfg.seed);

  std::vector<TreatmentRecord> records;
  if (cfg.history_source == HistorySource::Synthetic) {
    records = generate_histories(cfg.pool_size > 0 ? cfg.pool_size : cfg.n, cfg.max_len, dict, rng, cfg.history);
  } else {
    std::ifstream in(cfg.pool_file);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + cfg.pool_file);
    records = read_history_csv(in, dict);
  }
  if (static_cast<int>(records.size()) < cfg.n)
    throw Error(ErrorCode::PoolTooSmall, std::to_string(records.size()) + " records for n=" + std::to_string(cfg.n));
  // Sample n records without replacement, keeping pool order.
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(cfg.n));
  std::sort(idx.begin(), idx.end());

  SimulatedData out;
  auto& truth = out.truth;
  truth.eta = cfg.eta_true;
  truth.match_mode = cfg.match_mode;
  std::vector<TreatmentRecord> chosen;
  for (auto i : idx) chosen.push_back(records[i]);
  for (const auto& r : chosen) {
    truth.histories.push_back(r.to_history());
    if (truth.histories.back().episodes.empty()) throw Error(ErrorCode::EmptyHistory, r.owner);
  }

  const KernelConfig kcfg{cfg.eta_true, cfg.match_mode};
  out.similarity = history_similarity_matrix(truth.histories, kcfg, dict);

  // Partition truth.
  truth.m0 = cfg.m0_true;
  truth.sigma.resize(static_cast<std::size_t>(cfg.n));
  std::iota(truth.sigma.begin(), truth.sigma.end(), 0);
  if (!cfg.fixed_partition.empty()) {
    truth.labels = canonical_labels(cfg.fixed_partition);
  } else {
    bool found = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !found; ++attempt) {
      std::shuffle(truth.sigma.begin(), truth.sigma.end(), rng);
      const SimilarityContext ctx{out.similarity, truth.sigma, cfg.m0_true};
      const Partition p = ddcrp_sample(ctx, rng);
      const auto& sizes = p.sizes();
      const bool size_ok = *std::min_element(sizes.begin(), sizes.end()) >= cfg.min_cluster_size;
      if ((cfg.target_clusters == 0 || p.num_clusters() == cfg.target_clusters) && size_ok) {
        truth.labels = p.labels();
        found = true;
      }
    }
    if (!found) throw Error(ErrorCode::InvalidArgument, "no prior draw met the cluster-count constraints");
  }
  const int r = Partition::from_labels(truth.labels).num_clusters();

  // Dataset skeleton: covariates (1, x_i0, x_ij, ...), regimens.
  std::vector<IndividualRecord> inds;
  for (const auto& rec : chosen) {
    IndividualRecord ind{rec.owner, {}};
    const double x0 = dist::normal(rng);
    for (std::size_t j = 0; j < rec.visits.size(); ++j) {
      VisitRecord v;
      v.visit_index = static_cast<long>(j + 1);
      v.regimen = rec.visits[j];
      v.x.resize(cfg.s);
      v.x[0] = 1.0;
      if (cfg.s >= 2) v.x[1] = x0;
      for (int k = 2; k < cfg.s; ++k) v.x[k] = dist::normal(rng);
      v.y = Eigen::VectorXd::Zero(cfg.q);
      ind.visits.push_back(std::move(v));
    }
    inds.push_back(std::move(ind));
  }
  const LongitudinalDataset skeleton(cfg.q, cfg.s, inds);
  const FeatureOptions fopts{kcfg, FeatureKernel::SubsetTree, cfg.rep_threshold, cfg.variance_threshold, true};
  out.features = build_features(skeleton.visit_regimens(), fopts, dict);
  truth.d_star = out.features.basis.pca.d_star;
  for (const auto& reg : out.features.basis.representatives.regimens) truth.representatives.push_back(reg.to_string());

  // Cluster parameters.
  std::vector<Eigen::MatrixXd> fixed_beta;
  if (cfg.table_s1) {
    if (cfg.q != 3 || cfg.s != 3 || r != 3)
      throw Error(ErrorCode::InvalidArgument, "table_s1 truths need Q = S = 3 and three clusters");
    fixed_beta = table_s1_beta();
  }
  for (int k = 0; k < r; ++k) {
    ClusterParams th{Eigen::MatrixXd(cfg.q, cfg.s), Eigen::MatrixXd(cfg.q, truth.d_star)};
    for (Eigen::Index a = 0; a < th.beta.size(); ++a) th.beta.data()[a] = dist::normal(rng);
    for (Eigen::Index a = 0; a < th.gamma.size(); ++a) th.gamma.data()[a] = dist::normal(rng);
    if (!fixed_beta.empty()) th.beta = fixed_beta[static_cast<std::size_t>(k)];
    truth.clusters.push_back(std::move(th));
  }

  truth.sigma_omega = correlation_from_offdiag(cfg.q, cfg.correlation_offdiag);
  truth.sigma_eps2 = cfg.sigma_eps2_true;
  const Eigen::MatrixXd l_omega = Eigen::LLT<Eigen::MatrixXd>(truth.sigma_eps2 * truth.sigma_omega).matrixL();
  const double sd = std::sqrt(truth.sigma_eps2);

  Eigen::Index row = 0;
  for (std::size_t i = 0; i < inds.size(); ++i) {
    const auto& th = truth.clusters[static_cast<std::size_t>(truth.labels[i])];
    for (auto& v : inds[i].visits) {
      const Eigen::VectorXd h = out.features.reduced.row(row++).transpose();
      const Eigen::VectorXd omega = l_omega * dist::standard_normal_vector(rng, cfg.q);
      v.y = th.beta * v.x + th.gamma * h + omega + sd * dist::standard_normal_vector(rng, cfg.q);
    }
  }
  out.data = LongitudinalDataset(cfg.q, cfg.s, std::move(inds));
  return out;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const SimConfig& c) {
  return json{{"n", c.n},
              {"q", c.q},
              {"s", c.s},
              {"eta_true", c.eta_true},
              {"match_mode", std::string(to_string(c.match_mode))},
              {"history_source", c.history_source == HistorySource::Synthetic ? "synthetic" : "pool_file"},
              {"pool_file", c.pool_file},
              {"pool_size", c.pool_size},
              {"max_len", c.max_len},
              {"min_len", c.history.min_len},
              {"switch_prob", c.history.switch_prob},
              {"catalogue_size", c.history.catalogue_size},
              {"popularity_decay", c.history.popularity_decay},
              {"rep_threshold", c.rep_threshold},
              {"variance_threshold", c.variance_threshold},
              {"correlation_offdiag", c.correlation_offdiag},
              {"sigma_eps2_true", c.sigma_eps2_true},
              {"m0_true", c.m0_true},
              {"target_clusters", c.target_clusters},
              {"min_cluster_size", c.min_cluster_size},
              {"max_attempts", c.max_attempts},
              {"fixed_partition", c.fixed_partition},
              {"table_s1", c.table_s1},
              {"seed", c.seed}};
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "simulation config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n") c.n = v.get<int>();
      else if (key == "q") c.q = v.get<int>();
      else if (key == "s") c.s = v.get<int>();
      else if (key == "eta_true") c.eta_true = v.get<double>();
      else if (key == "match_mode") c.match_mode = parse_match_mode(v.get<std::string>());
      else if (key == "history_source") {
        const auto s = v.get<std::string>();
        if (s == "synthetic") c.history_source = HistorySource::Synthetic;
        else if (s == "pool_file") c.history_source = HistorySource::PoolFile;
        else throw Error(ErrorCode::InvalidArgument, "history_source must be synthetic or pool_file");
      } else if (key == "pool_file") c.pool_file = v.get<std::string>();
      else if (key == "pool_size") c.pool_size = v.get<int>();
      else if (key == "max_len") c.max_len = v.get<int>();
      else if (key == "min_len") c.history.min_len = v.get<int>();
      else if (key == "switch_prob") c.history.switch_prob = v.get<double>();
      else if (key == "catalogue_size") c.history.catalogue_size = v.get<int>();
      else if (key == "popularity_decay") c.history.popularity_decay = v.get<double>();
      else if (key == "rep_threshold") c.rep_threshold = v.get<int>();
      else if (key == "variance_threshold") c.variance_threshold = v.get<double>();
      else if (key == "correlation_offdiag") c.correlation_offdiag = v.get<std::vector<double>>();
      else if (key == "sigma_eps2_true") c.sigma_eps2_true = v.get<double>();
      else if (key == "m0_true") c.m0_true = v.get<double>();
      else if (key == "target_clusters") c.target_clusters = v.get<int>();
      else if (key == "min_cluster_size") c.min_cluster_size = v.get<int>();
      else if (key == "max_attempts") c.max_attempts = v.get<int>();
      else if (key == "fixed_partition") c.fixed_partition = v.get<std::vector<int>>();
      else if (key == "table_s1") c.table_s1 = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw Error(ErrorCode::InvalidArgument, "unknown simulation key '" + key + "'");
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "simulation key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

json to_json(const GroundTruth& t) {
  json beta = json::array(), gamma = json::array(), hist = json::array();
  for (const auto& c : t.clusters) {
    beta.push_back(jsonio::matrix(c.beta));
    gamma.push_back(jsonio::matrix(c.gamma));
  }
  for (const auto& h : t.histories) {
    std::vector<std::string> eps;
    for (const auto& e : h.episodes) eps.push_back(e.to_string());
    hist.push_back({{"id", h.owner}, {"episodes", eps}});
  }
  return json{{"labels", t.labels},
              {"r", t.num_clusters()},
              {"beta", beta},
              {"gamma", gamma},
              {"sigma_omega", jsonio::matrix(t.sigma_omega)},
              {"sigma_eps2", t.sigma_eps2},
              {"m0", t.m0},
              {"sigma", t.sigma},
              {"histories", hist},
              {"representatives", t.representatives},
              {"eta", t.eta},
              {"match_mode", std::string(to_string(t.match_mode))},
              {"d_star", t.d_star}};
}

GroundTruth ground_truth_from_json(const json& j, const DrugDictionary& dict) {
  GroundTruth t;
  try {
    t.labels = j.at("labels").get<std::vector<int>>();
    const auto& beta = j.at("beta");
    const auto& gamma = j.at("gamma");
    if (beta.size() != gamma.size()) throw Error(ErrorCode::ParseError, "beta/gamma cluster counts differ");
    for (std::size_t k = 0; k < beta.size(); ++k) t.clusters.push_back({jsonio::to_matrix(beta[k]), jsonio::to_matrix(gamma[k])});
    t.sigma_omega = jsonio::to_matrix(j.at("sigma_omega"));
    t.sigma_eps2 = j.at("sigma_eps2").get<double>();
    t.m0 = j.at("m0").get<double>();
    t.sigma = j.at("sigma").get<std::vector<int>>();
    for (const auto& h : j.at("histories")) {
      RegimenHistory rh{h.at("id").get<std::string>(), {}};
      for (const auto& e : h.at("episodes")) rh.episodes.push_back(parse_regimen(e.get<std::string>(), dict));
      t.histories.push_back(std::move(rh));
    }
    t.representatives = j.at("representatives").get<std::vector<std::string>>();
    t.eta = j.at("eta").get<double>();
    t.match_mode = parse_match_mode(j.at("match_mode").get<std::string>());
    t.d_star = j.at("d_star").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("ground truth: ") + e.what());
  }
  if (Partition::from_labels(t.labels).num_clusters() != t.num_clusters())
    throw Error(ErrorCode::ParseError, "ground truth labels vs cluster count");
  return t;
}

}  // namespace drugcomb

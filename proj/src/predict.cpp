#include "drugcomb/predict.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "drugcomb/diagnostics.hpp"
#include "drugcomb/error.hpp"

namespace drugcomb {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FittedModel

void FittedModel::validate() const {
  if (chain.draws.empty()) throw Error(ErrorCode::EmptyChain, "model has no draws");
  const auto d = basis.d_star();
  if (static_cast<int>(covariate_names.size()) != s || static_cast<int>(item_names.size()) != q)
    throw Error(ErrorCode::DimensionMismatch, "schema names vs Q/S");
  if (individual_ids.size() != histories.size()) throw Error(ErrorCode::DimensionMismatch, "ids vs histories");
  for (const auto& dr : chain.draws) {
    if (dr.labels.size() != individual_ids.size()) throw Error(ErrorCode::DimensionMismatch, "draw labels vs ids");
    for (const auto& c : dr.clusters)
      if (c.beta.rows() != q || c.beta.cols() != s || c.gamma.rows() != q || c.gamma.cols() != d)
        throw Error(ErrorCode::DimensionMismatch, "cluster parameters vs basis D*=" + std::to_string(d));
  }
}

std::optional<std::size_t> FittedModel::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < individual_ids.size(); ++i)
    if (individual_ids[i] == id) return i;
  return std::nullopt;
}

void FittedModel::save(const std::filesystem::path& dir) const {
  validate();
  const json meta = {{"baseline", std::string(to_string(baseline))},
                     {"q", q},
                     {"s", s},
                     {"item_names", item_names},
                     {"covariate_names", covariate_names},
                     {"individual_ids", individual_ids},
                     {"keep_duplicates", keep_duplicates}};
  write_chain(chain, dir, meta);
  open_out(dir / "basis.json") << to_json(basis).dump(2) << '\n';
  auto dict_out = open_out(dir / "dictionary.csv");
  dict.write_csv(dict_out);
  std::vector<TreatmentRecord> records;
  for (const auto& h : histories) {
    TreatmentRecord r{h.owner, {}};
    for (const auto& e : h.episodes) r.visits.emplace_back(e);
    records.push_back(std::move(r));
  }
  auto hist_out = open_out(dir / "histories.csv");
  write_history_csv(hist_out, records);
}

FittedModel FittedModel::load(const std::filesystem::path& dir) {
  FittedModel m;
  {
    std::ifstream in(dir / "dictionary.csv");
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + (dir / "dictionary.csv").string());
    m.dict = DrugDictionary::read_csv(in);
  }
  try {
    const json meta = json::parse(read_file(dir / "meta.json"));
    m.baseline = parse_baseline_mode(meta.at("baseline").get<std::string>());
    m.q = meta.at("q").get<int>();
    m.s = meta.at("s").get<int>();
    m.item_names = meta.at("item_names").get<std::vector<std::string>>();
    m.covariate_names = meta.at("covariate_names").get<std::vector<std::string>>();
    m.individual_ids = meta.at("individual_ids").get<std::vector<std::string>>();
    m.keep_duplicates = meta.value("keep_duplicates", false);
    m.basis = feature_basis_from_json(json::parse(read_file(dir / "basis.json")), m.dict);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model metadata: ") + e.what());
  }
  m.chain = read_chain(dir);
  std::ifstream hin(dir / "histories.csv");
  if (!hin) throw Error(ErrorCode::IoError, "cannot open " + (dir / "histories.csv").string());
  const auto records = read_history_csv(hin, m.dict);
  for (const auto& id : m.individual_ids) {
    const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.owner == id; });
    if (it == records.end()) throw Error(ErrorCode::UnknownIndividual, id);
    m.histories.push_back(it->to_history(m.keep_duplicates));
  }
  m.validate();
  return m;
}

FittedModel make_fitted_model(const FitResult& fit, const LongitudinalDataset& data, const DrugDictionary& dict,
                              bool keep_duplicates) {
  FittedModel m;
  m.dict = dict;
  m.basis = fit.features.basis;
  m.chain = fit.chain;
  m.baseline = fit.chain.config.baseline_mode;
  m.q = data.q();
  m.s = data.s();
  m.item_names = data.item_names();
  m.covariate_names = data.covariate_names();
  for (int k = static_cast<int>(m.item_names.size()); k < m.q; ++k) m.item_names.push_back("y" + std::to_string(k + 1));
  for (int k = static_cast<int>(m.covariate_names.size()); k < m.s; ++k)
    m.covariate_names.push_back("x" + std::to_string(k + 1));
  for (const auto& ind : data.individuals()) m.individual_ids.push_back(ind.id);
  m.histories = data.histories(keep_duplicates);
  m.keep_duplicates = keep_duplicates;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Prediction

std::string_view to_string(NoiseInclusion n) {
  return n == NoiseInclusion::MeanOnly ? "mean_only" : "with_omega_eps";
}

NoiseInclusion parse_noise_inclusion(std::string_view text) {
  if (text == "mean_only") return NoiseInclusion::MeanOnly;
  if (text == "with_omega_eps") return NoiseInclusion::WithOmegaEps;
  throw Error(ErrorCode::ParseError, "noise inclusion '" + std::string(text) + "'");
}

namespace {

ClusterParams draw_new_cluster(const LatentPriors& p, Rng& rng) {
  const auto q = static_cast<Eigen::Index>(p.e.size());
  ClusterParams c;
  c.beta.resize(q, p.e.front().size());
  c.gamma.resize(q, p.f.front().size());
  for (Eigen::Index k = 0; k < q; ++k) {
    c.beta.row(k) = dist::mvn(rng, p.e[static_cast<std::size_t>(k)], p.b[static_cast<std::size_t>(k)]).transpose();
    c.gamma.row(k) = dist::mvn(rng, p.f[static_cast<std::size_t>(k)], p.lambda[static_cast<std::size_t>(k)]).transpose();
  }
  return c;
}

// Similarity of a new individual to every training individual.
Eigen::VectorXd new_similarity(const FittedModel& m, const std::vector<Regimen>& history) {
  const auto n = static_cast<Eigen::Index>(m.individual_ids.size());
  if (m.baseline == BaselineMode::DpLinear) return Eigen::VectorXd::Ones(n);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (history.empty()) return out;
  const RegimenHistory h{"new", history};
  for (Eigen::Index i = 0; i < n; ++i)
    out(i) = history_similarity(h, m.histories[static_cast<std::size_t>(i)], m.basis.kernel_config, m.dict);
  return out;
}

// Cluster of a new individual seated after all n training individuals.
ClusterParams seat_new(const Draw& d, const Eigen::VectorXd& sim, Rng& rng) {
  const auto r = static_cast<std::size_t>(d.num_clusters());
  const double n = static_cast<double>(d.labels.size());
  const double total = sim.sum();
  std::vector<double> w(r + 1, 0.0);
  for (std::size_t i = 0; i < d.labels.size(); ++i)
    w[static_cast<std::size_t>(d.labels[i])] += total > 0.0 ? sim(static_cast<Eigen::Index>(i)) / total : 1.0 / n;
  std::vector<double> logw(r + 1);
  for (std::size_t k = 0; k < r; ++k) logw[k] = std::log(n / (d.m0 + n) * w[k]);
  logw[r] = std::log(d.m0 / (d.m0 + n));
  const auto k = dist::categorical_log(rng, logw);
  return k < r ? d.clusters[k] : draw_new_cluster(d.priors, rng);
}

}  // namespace

Eigen::MatrixXd predictive_draws(const FittedModel& model, const Scenario& sc, Rng& rng) {
  if (model.chain.draws.empty()) throw Error(ErrorCode::EmptyChain, "model has no draws");
  if (sc.covariates.size() != model.s)
    throw Error(ErrorCode::DimensionMismatch, "covariates need " + std::to_string(model.s) + " entries");
  std::optional<std::size_t> idx;
  if (sc.individual_id) {
    idx = model.index_of(*sc.individual_id);
    if (!idx && sc.history.empty()) throw Error(ErrorCode::UnknownIndividual, *sc.individual_id);
  }
  const Eigen::VectorXd h = reduce_regimen(model.basis, sc.candidate, model.dict);
  Eigen::VectorXd sim;
  if (!idx && model.baseline != BaselineMode::NormalLinear) sim = new_similarity(model, sc.history);

  Eigen::MatrixXd out(model.q, static_cast<Eigen::Index>(model.chain.draws.size()));
  for (std::size_t t = 0; t < model.chain.draws.size(); ++t) {
    const auto& d = model.chain.draws[t];
    ClusterParams fresh;
    const ClusterParams* c = nullptr;
    if (idx) {
      c = &d.params_of(*idx);
    } else {
      fresh = model.baseline == BaselineMode::NormalLinear ? draw_new_cluster(d.priors, rng) : seat_new(d, sim, rng);
      c = &fresh;
    }
    Eigen::VectorXd y = c->beta * sc.covariates + c->gamma * h;
    if (sc.noise == NoiseInclusion::WithOmegaEps) {
      const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(d.sigma_eps2 * d.sigma_omega).matrixL();
      y += l * dist::standard_normal_vector(rng, model.q);
      y += std::sqrt(d.sigma_eps2) * dist::standard_normal_vector(rng, model.q);
    }
    out.col(static_cast<Eigen::Index>(t)) = y;
  }
  return out;
}

ScenarioPrediction predict_scenario(const FittedModel& model, const Scenario& sc, double level, Rng& rng) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0,1)");
  const Eigen::MatrixXd draws = predictive_draws(model, sc, rng);
  ScenarioPrediction p;
  p.items = model.item_names;
  p.level = level;
  p.draws = static_cast<std::size_t>(draws.cols());
  p.mean = draws.rowwise().mean();
  p.lower.resize(model.q);
  p.upper.resize(model.q);
  for (Eigen::Index k = 0; k < model.q; ++k) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(draws.cols()));
    for (Eigen::Index t = 0; t < draws.cols(); ++t) v.push_back(draws(k, t));
    p.lower(k) = quantile(v, 0.5 * (1.0 - level));
    p.upper(k) = quantile(v, 0.5 * (1.0 + level));
    // One draw or a tiny MC sample can put the mean a rounding step outside.
    p.lower(k) = std::min(p.lower(k), p.mean(k));
    p.upper(k) = std::max(p.upper(k), p.mean(k));
  }
  return p;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Regimen regimen_from_json(const json& j, const DrugDictionary& dict) {
  if (j.is_string()) return parse_regimen(j.get<std::string>(), dict);
  if (j.is_array()) {
    std::vector<std::string> codes;
    for (const auto& c : j) {
      if (!c.is_string()) throw Error(ErrorCode::ParseError, "drug codes must be strings");
      codes.push_back(c.get<std::string>());
    }
    return make_regimen(std::move(codes), dict);
  }
  throw Error(ErrorCode::ParseError, "regimen must be a string or an array of codes");
}

}  // namespace

Scenario scenario_from_json(const json& j, const FittedModel& model) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "scenario must be a JSON object");
  static const std::vector<std::string> known = {"individual_id", "history", "covariates", "candidate",
                                                 "noise",         "level",   "seed"};
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw Error(ErrorCode::ParseError, "unknown key '" + k + "'");
  Scenario sc;
  if (j.contains("individual_id")) {
    if (!j["individual_id"].is_string()) throw Error(ErrorCode::ParseError, "individual_id must be a string");
    sc.individual_id = j["individual_id"].get<std::string>();
  }
  if (j.contains("history")) {
    if (!j["history"].is_array()) throw Error(ErrorCode::ParseError, "history must be an array");
    for (const auto& e : j["history"]) sc.history.push_back(regimen_from_json(e, model.dict));
  }
  if (!j.contains("covariates") || !j["covariates"].is_array())
    throw Error(ErrorCode::ParseError, "covariates must be an array");
  std::vector<double> x;
  for (const auto& v : j["covariates"]) {
    if (!v.is_number()) throw Error(ErrorCode::ParseError, "covariates must be numbers");
    x.push_back(v.get<double>());
  }
  if (static_cast<int>(x.size()) == model.s - 1) x.insert(x.begin(), 1.0);
  if (static_cast<int>(x.size()) != model.s)
    throw Error(ErrorCode::DimensionMismatch, "covariates need " + std::to_string(model.s - 1) + " or " +
                                                  std::to_string(model.s) + " entries");
  sc.covariates = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  if (!j.contains("candidate")) throw Error(ErrorCode::ParseError, "candidate is required");
  sc.candidate = regimen_from_json(j["candidate"], model.dict);
  if (j.contains("noise")) {
    if (!j["noise"].is_string()) throw Error(ErrorCode::ParseError, "noise must be a string");
    sc.noise = parse_noise_inclusion(j["noise"].get<std::string>());
  }
  return sc;
}

json to_json(const ScenarioPrediction& p) {
  json items = json::array();
  for (std::size_t k = 0; k < p.items.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    items.push_back({{"item", p.items[k]}, {"mean", p.mean(i)}, {"lower", p.lower(i)}, {"upper", p.upper(i)}});
  }
  return {{"items", items}, {"level", p.level}, {"draws", p.draws}};
}

json regimens_json(const DrugDictionary& dict) {
  json drugs = json::array();
  std::vector<std::string> classes;
  for (const auto& e : dict.entries()) {
    const std::string cls(to_string(e.drug_class));
    drugs.push_back({{"code", e.code}, {"class", cls}, {"name", e.display_name}});
    if (std::find(classes.begin(), classes.end(), cls) == classes.end()) classes.push_back(cls);
  }
  std::sort(classes.begin(), classes.end());
  return {{"drugs", drugs}, {"classes", classes}};
}

json meta_json(const FittedModel& model) {
  json reps = json::array();
  for (const auto& r : model.basis.representatives.regimens) reps.push_back(r.to_string());
  return {{"q", model.q},
          {"s", model.s},
          {"items", model.item_names},
          {"covariates", {{"names", model.covariate_names}, {"intercept", model.covariate_names.front()}}},
          {"d_star", model.basis.d_star()},
          {"draws", model.chain.draws.size()},
          {"baseline", std::string(to_string(model.baseline))},
          {"kernel", {{"eta", model.basis.kernel_config.eta},
                      {"match_mode", std::string(to_string(model.basis.kernel_config.match_mode))}}},
          {"individual_ids", model.individual_ids},
          {"dictionary", regimens_json(model.dict)["drugs"]},
          {"representatives", reps}};
}

HttpReply predict_http(const FittedModel& model, const std::string& request_body) {
  auto fail = [](int status, const Error& e) {
    return HttpReply{status, json{{"error", std::string(to_string(e.code()))}, {"detail", e.detail()}}.dump()};
  };
  try {
    const json req = json::parse(request_body);
    const Scenario sc = scenario_from_json(req, model);
    double level = 0.95;
    std::uint64_t seed = 0;
    if (req.contains("level")) {
      if (!req["level"].is_number()) throw Error(ErrorCode::ParseError, "level must be a number");
      level = req["level"].get<double>();
      if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::ParseError, "level must lie in (0,1)");
    }
    if (req.contains("seed")) {
      if (!req["seed"].is_number_unsigned()) throw Error(ErrorCode::ParseError, "seed must be a non-negative integer");
      seed = req["seed"].get<std::uint64_t>();
    }
    Rng rng(seed);
    return {200, to_json(predict_scenario(model, sc, level, rng)).dump()};
  } catch (const json::exception& e) {
    return fail(400, Error(ErrorCode::ParseError, e.what()));
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::UnknownDrug:
      case ErrorCode::UnknownIndividual:
        return fail(422, e);
      default:
        return fail(400, e);
    }
  }
}

}  // namespace drugcomb

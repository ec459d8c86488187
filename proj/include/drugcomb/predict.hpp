#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "drugcomb/fit.hpp"
#include "drugcomb/kernel_features.hpp"
#include "drugcomb/model.hpp"
#include "drugcomb/regimen_kernel.hpp"
#include "drugcomb/sampler.hpp"

namespace drugcomb {

// Everything the prediction service needs, loaded once and shared read-only.
struct FittedModel {
  DrugDictionary dict;
  FeatureBasis basis;
  ChainOutput chain;
  BaselineMode baseline = BaselineMode::DdcrpSt;
  int q = 0;
  int s = 0;
  std::vector<std::string> item_names;
  std::vector<std::string> covariate_names;  // S entries, first is the intercept
  std::vector<std::string> individual_ids;
  std::vector<RegimenHistory> histories;     // training histories, same order as ids
  bool keep_duplicates = false;

  // Throws DimensionMismatch when basis, draws and schema disagree.
  void validate() const;
  std::optional<std::size_t> index_of(const std::string& id) const;

  // Directory layout: draws.jsonl, meta.json, assignments.csv, basis.json,
  // dictionary.csv, histories.csv.
  void save(const std::filesystem::path& dir) const;
  static FittedModel load(const std::filesystem::path& dir);
};

FittedModel make_fitted_model(const FitResult& fit, const LongitudinalDataset& data,
                              const DrugDictionary& dict, bool keep_duplicates = false);

enum class NoiseInclusion { MeanOnly, WithOmegaEps };

std::string_view to_string(NoiseInclusion n);
NoiseInclusion parse_noise_inclusion(std::string_view text);

struct Scenario {
  std::optional<std::string> individual_id;  // a training individual
  std::vector<Regimen> history;              // used when the id is absent or unknown
  Eigen::VectorXd covariates;                // S entries, covariates[0] == 1
  Regimen candidate;
  NoiseInclusion noise = NoiseInclusion::WithOmegaEps;
};

struct ScenarioPrediction {
  std::vector<std::string> items;
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double level = 0.95;
  std::size_t draws = 0;
};

// One predictive draw per stored posterior draw. A training individual uses
// its cluster in that draw; anyone else is seated by one ddCRP draw against
// the training individuals (normal_linear always opens a new cluster).
ScenarioPrediction predict_scenario(const FittedModel& model, const Scenario& sc, double level, Rng& rng);

// Per-draw predictive values, Q x draws, before summarizing.
Eigen::MatrixXd predictive_draws(const FittedModel& model, const Scenario& sc, Rng& rng);

// Request body: {"individual_id"?, "history"?: [regimen...], "covariates": [...],
// "candidate": "A+B+C" | [codes], "noise"?: "with_omega_eps" | "mean_only",
// "level"?: 0.95, "seed"?: 0}. Covariates may omit the leading intercept.
Scenario scenario_from_json(const nlohmann::json& j, const FittedModel& model);
nlohmann::json to_json(const ScenarioPrediction& p);

nlohmann::json meta_json(const FittedModel& model);
nlohmann::json regimens_json(const DrugDictionary& dict);

struct HttpReply {
  int status = 200;
  std::string body;
};

// Full request handling for POST /api/predict. 400 for malformed input,
// 422 for an unknown drug or individual, 200 otherwise.
HttpReply predict_http(const FittedModel& model, const std::string& request_body);

}  // namespace drugcomb

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drugcomb/diagnostics.hpp"
#include "drugcomb/error.hpp"
#include "drugcomb/fit.hpp"
#include "drugcomb/predict.hpp"
#include "drugcomb/server.hpp"
#include "drugcomb/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace drugcomb;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out.precision(17);
  return out;
}

DrugDictionary load_dictionary(const std::string& path) {
  if (path.empty()) return DrugDictionary::standard();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return DrugDictionary::read_csv(in);
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

// Flags shared by fit and the sampler config; unset flags leave the config alone.
struct McmcFlags {
  std::string config;
  double eta = 0.5;
  int iters = 0, burn_in = 0, thin = 0;
  std::uint64_t seed = 0;
  std::string baseline, match_mode, sigma_eps_mode;
  CLI::Option *eta_opt, *iters_opt, *burn_opt, *thin_opt, *seed_opt;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON file with sampler settings");
    eta_opt = app->add_option("--eta", eta, "ST kernel decay factor in (0,1]");
    iters_opt = app->add_option("--iters", iters, "total MCMC iterations");
    burn_opt = app->add_option("--burn-in", burn_in, "discarded iterations");
    thin_opt = app->add_option("--thin", thin, "keep every thin-th draw");
    seed_opt = app->add_option("--seed", seed, "PRNG seed");
    app->add_option("--baseline", baseline, "ddcrp_st | dp_linear | normal_linear");
    app->add_option("--match-mode", match_mode, "strict | class_relaxed");
    app->add_option("--sigma-eps-mode", sigma_eps_mode, "consistent | paper");
  }

  McmcConfig resolve() const {
    McmcConfig c = config.empty() ? McmcConfig{} : mcmc_config_from_json(json::parse(slurp(config)));
    if (eta_opt->count()) c.eta = eta;
    if (iters_opt->count()) c.n_iter = iters;
    if (burn_opt->count()) c.burn_in = burn_in;
    if (thin_opt->count()) c.thin = thin;
    if (seed_opt->count()) c.seed = seed;
    if (!baseline.empty()) c.baseline_mode = parse_baseline_mode(baseline);
    if (!match_mode.empty()) c.match_mode = parse_match_mode(match_mode);
    if (!sigma_eps_mode.empty()) c.sigma_eps_mode = parse_sigma_eps_mode(sigma_eps_mode);
    c.validate();
    return c;
  }
};

int run_simulate(const std::string& config, const std::string& out_dir, std::uint64_t seed, bool seed_set,
                 const std::string& dict_path) {
  SimConfig cfg = config.empty() ? SimConfig{} : sim_config_from_json(json::parse(slurp(config)));
  if (seed_set) cfg.seed = seed;
  const auto dict = load_dictionary(dict_path);
  const auto sim = generate_dataset(cfg, dict);
  fs::create_directories(out_dir);
  auto data_out = open_out(fs::path(out_dir) / "data.csv");
  sim.data.write_csv(data_out);
  open_out(fs::path(out_dir) / "truth.json") << to_json(sim.truth).dump(2) << '\n';
  open_out(fs::path(out_dir) / "config.json") << to_json(cfg).dump(2) << '\n';
  auto dict_out = open_out(fs::path(out_dir) / "dictionary.csv");
  dict.write_csv(dict_out);
  std::cout << "simulated " << sim.data.n() << " individuals, " << sim.data.total_visits() << " visits, "
            << sim.truth.num_clusters() << " clusters, D*=" << sim.truth.d_star << " -> " << out_dir << '\n';
  return 0;
}

int run_fit(const std::string& data_path, const std::string& dict_path, const std::string& out_dir,
            const McmcFlags& flags, int rep_threshold, double variance_threshold, bool quiet) {
  const auto dict = load_dictionary(dict_path);
  std::ifstream in(data_path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + data_path);
  const auto data = LongitudinalDataset::read_csv(in, dict);
  FitOptions opts;
  opts.mcmc = flags.resolve();
  opts.rep_threshold = rep_threshold;
  opts.variance_threshold = variance_threshold;
  const int every = std::max(1, opts.mcmc.n_iter / 20);
  const ProgressFn progress = [&](int it) {
    if (!quiet && it % every == 0) std::cerr << "iteration " << it << '/' << opts.mcmc.n_iter << '\n';
  };
  const auto result = fit(data, dict, opts, progress);
  const auto model = make_fitted_model(result, data, dict, opts.keep_duplicates);
  model.save(out_dir);
  const auto& pca = result.features.basis.pca;
  const json summary = {{"representatives", result.features.basis.representatives.size()},
                        {"d_star", pca.d_star},
                        {"explained_variance", pca.explained_variance_ratio.sum()},
                        {"fallback_rows", std::count(result.features.weights.fallback.begin(),
                                                     result.features.weights.fallback.end(), true)},
                        {"draws", result.chain.draws.size()},
                        {"acceptance", {{"permutation", result.chain.permutation.rate()},
                                        {"sigma_omega", result.chain.sigma_omega.rate()}}}};
  open_out(fs::path(out_dir) / "fit_summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_predict(const std::string& model_dir, const std::string& scenario_path, std::uint64_t seed, bool seed_set,
                double level, bool level_set) {
  const auto model = FittedModel::load(model_dir);
  json req = json::parse(slurp(scenario_path));
  if (seed_set) req["seed"] = seed;
  if (level_set) req["level"] = level;
  const auto reply = predict_http(model, req.dump());
  (reply.status == 200 ? std::cout : std::cerr) << reply.body << '\n';
  return reply.status == 200 ? 0 : 1;
}

int run_kernel(const std::vector<std::string>& regimens, const std::string& histories, double eta,
               const std::string& match_mode, const std::string& dict_path, bool linear) {
  const auto dict = load_dictionary(dict_path);
  const KernelConfig cfg{eta, match_mode.empty() ? MatchMode::Strict : parse_match_mode(match_mode)};
  cfg.validate();
  std::cout.precision(17);
  if (!histories.empty()) {
    std::ifstream in(histories);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + histories);
    std::vector<RegimenHistory> hs;
    for (const auto& r : read_history_csv(in, dict)) hs.push_back(r.to_history());
    write_matrix_csv(std::cout, history_similarity_matrix(hs, cfg, dict));
    return 0;
  }
  std::vector<Regimen> regs;
  for (const auto& r : regimens) regs.push_back(parse_regimen(r, dict));
  std::vector<RegimenTree> trees;
  for (const auto& r : regs) trees.push_back(build_regimen_tree(r, dict));
  const auto n = static_cast<Eigen::Index>(regs.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      g(i, j) = linear ? linear_kernel(regs[static_cast<std::size_t>(i)], regs[static_cast<std::size_t>(j)])
                       : st_kernel(trees[static_cast<std::size_t>(i)], trees[static_cast<std::size_t>(j)], cfg);
  write_matrix_csv(std::cout, g);
  return 0;
}

int run_diagnose(const std::string& model_dir, const std::string& out_dir, const std::string& truth_path,
                 double level, int max_lag) {
  const auto model = FittedModel::load(model_dir);
  const auto& chain = model.chain;
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  {
    auto f = open_out(out / "trace.csv");
    write_trace_csv(f, chain);
  }
  {
    auto f = open_out(out / "acf.csv");
    write_acf_csv(f, chain, max_lag);
  }
  const auto rows = credible_intervals(chain, level);
  {
    auto f = open_out(out / "summary.csv");
    write_summary_csv(f, rows);
  }
  {
    auto f = open_out(out / "coclustering.csv");
    write_matrix_csv(f, coclustering_matrix(chain));
  }
  json summary = summary_json(chain, level);
  if (!truth_path.empty()) {
    const auto truth = ground_truth_from_json(json::parse(slurp(truth_path)), model.dict);
    const auto entries = beta_vs_truth(chain, truth, level);
    auto f = open_out(out / "beta_vs_truth.csv");
    f << "cluster,item,column,truth,mean,lower,upper,mse,covered\n";
    double covered = 0.0, mse = 0.0;
    for (const auto& e : entries) {
      f << e.cluster << ',' << e.item << ',' << e.column << ',' << e.truth << ',' << e.mean << ',' << e.lower << ','
        << e.upper << ',' << e.mse << ',' << e.covered << '\n';
      covered += e.covered;
      mse = std::max(mse, e.mse);
    }
    summary["truth"] = {{"adjusted_rand_index", adjusted_rand_index(least_squares_clustering(chain), truth.labels)},
                        {"beta_coverage", covered / static_cast<double>(entries.size())},
                        {"beta_max_mse", mse}};
  }
  open_out(out / "summary.json") << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_geweke(int iterations, std::uint64_t seed, const std::string& mode) {
  GewekeConfig cfg;
  cfg.iterations = iterations;
  cfg.marginal_draws = iterations;
  cfg.seed = seed;
  if (!mode.empty()) cfg.sigma_eps_mode = parse_sigma_eps_mode(mode);
  const auto report = geweke_joint_test(cfg);
  std::cout << "moment,marginal_mean,marginal_se,successive_mean,successive_se,z\n";
  for (const auto& m : report.moments)
    std::cout << m.name << ',' << m.marginal_mean << ',' << m.marginal_se << ',' << m.successive_mean << ','
              << m.successive_se << ',' << m.z << '\n';
  std::cout << "within |z|<3: " << report.fraction_within(3.0) << (report.flagged() ? "  (flagged |z|>4)" : "") << '\n';
  return report.inconclusive || report.flagged() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drug-combination effect inference with subset-tree kernels and a ddCRP mixture"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset with known truth");
  std::string sim_config, sim_out = "sim", sim_dict;
  std::uint64_t sim_seed = 0;
  sim->add_option("--config", sim_config, "JSON simulation config");
  sim->add_option("--out", sim_out, "output directory");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "PRNG seed");
  sim->add_option("--dictionary", sim_dict, "drug dictionary CSV (default: built-in)");

  auto* fitc = app.add_subcommand("fit", "run the MCMC sampler and save a model directory");
  std::string fit_data, fit_dict, fit_out = "model";
  int rep_threshold = 10;
  double variance_threshold = 0.999;
  bool quiet = false;
  McmcFlags flags;
  fitc->add_option("--data", fit_data, "dataset CSV")->required();
  fitc->add_option("--dictionary", fit_dict, "drug dictionary CSV (default: built-in)");
  fitc->add_option("--out", fit_out, "model directory");
  fitc->add_option("--rep-threshold", rep_threshold, "representatives need more visits than this");
  fitc->add_option("--variance-threshold", variance_threshold, "PCA cumulative variance to keep");
  fitc->add_flag("--quiet", quiet, "no progress output");
  flags.add(fitc);

  auto* pred = app.add_subcommand("predict", "posterior predictive summary for a scenario");
  std::string pred_model, pred_scenario;
  std::uint64_t pred_seed = 0;
  double pred_level = 0.95;
  pred->add_option("--model", pred_model, "model directory")->required();
  pred->add_option("--scenario", pred_scenario, "scenario JSON")->required();
  auto* pred_seed_opt = pred->add_option("--seed", pred_seed, "PRNG seed (overrides the scenario)");
  auto* pred_level_opt = pred->add_option("--level", pred_level, "interval level");

  auto* kern = app.add_subcommand("kernel", "kernel values between regimens or histories");
  std::vector<std::string> kern_regs;
  std::string kern_hist, kern_mode, kern_dict;
  double kern_eta = 0.5;
  bool kern_linear = false;
  kern->add_option("regimens", kern_regs, "regimens such as ABC+LAM+EFV");
  kern->add_option("--histories", kern_hist, "history CSV; prints the history similarity matrix");
  kern->add_option("--eta", kern_eta, "decay factor");
  kern->add_option("--match-mode", kern_mode, "strict | class_relaxed");
  kern->add_option("--dictionary", kern_dict, "drug dictionary CSV");
  kern->add_flag("--linear", kern_linear, "linear drug-overlap kernel instead");

  auto* diag = app.add_subcommand("diagnose", "chain summaries and truth comparisons, or the Geweke test");
  std::string diag_model, diag_out = "diagnostics", diag_truth, geweke_mode;
  double diag_level = 0.95;
  int max_lag = 50, geweke_iters = 20000;
  std::uint64_t geweke_seed = 7;
  bool geweke = false;
  diag->add_option("--model", diag_model, "model directory");
  diag->add_option("--out", diag_out, "output directory");
  diag->add_option("--truth", diag_truth, "truth.json from simulate");
  diag->add_option("--level", diag_level, "interval level");
  diag->add_option("--max-lag", max_lag, "autocorrelation lags");
  diag->add_flag("--geweke", geweke, "run the joint-distribution test on the tiny model");
  diag->add_option("--iters", geweke_iters, "Geweke iterations");
  diag->add_option("--seed", geweke_seed, "Geweke seed");
  diag->add_option("--sigma-eps-mode", geweke_mode, "consistent | paper");

  auto* srv = app.add_subcommand("serve", "HTTP JSON API for predictions");
  std::string srv_model, srv_host = "127.0.0.1", srv_static;
  int srv_port = 8080;
  srv->add_option("--model", srv_model, "model directory")->required();
  srv->add_option("--host", srv_host, "bind address");
  srv->add_option("--port", srv_port, "port");
  srv->add_option("--static", srv_static, "directory of UI files to host");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return run_simulate(sim_config, sim_out, sim_seed, sim_seed_opt->count() > 0, sim_dict);
    if (*fitc) return run_fit(fit_data, fit_dict, fit_out, flags, rep_threshold, variance_threshold, quiet);
    if (*pred)
      return run_predict(pred_model, pred_scenario, pred_seed, pred_seed_opt->count() > 0, pred_level,
                         pred_level_opt->count() > 0);
    if (*kern) {
      if (kern_regs.empty() && kern_hist.empty()) throw Error(ErrorCode::InvalidArgument, "give regimens or --histories");
      return run_kernel(kern_regs, kern_hist, kern_eta, kern_mode, kern_dict, kern_linear);
    }
    if (*diag) {
      if (geweke) return run_geweke(geweke_iters, geweke_seed, geweke_mode);
      if (diag_model.empty()) throw Error(ErrorCode::InvalidArgument, "--model is required");
      return run_diagnose(diag_model, diag_out, diag_truth, diag_level, max_lag);
    }
    if (*srv) {
      const auto model = FittedModel::load(srv_model);
      std::cerr << "serving on http://" << srv_host << ':' << srv_port << '\n';
      serve(model, srv_host, srv_port, srv_static);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

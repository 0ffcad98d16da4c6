#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "itr/cate.hpp"
#include "itr/dataset.hpp"
#include "itr/dgp.hpp"
#include "itr/temvip.hpp"

namespace itr {

enum class TimingMode { serial, parallel };

struct ExperimentConfig {
  std::vector<std::string> dgps;
  std::vector<int> sample_sizes{250, 500, 1000};
  int test_size = 100;
  int replicates = 100;
  std::vector<std::string> estimators;  // empty = the full default roster
  bool run_unfiltered = true;
  bool run_filtered = true;
  std::uint64_t master_seed = 1;
  TimingMode timing_mode = TimingMode::serial;
  int p = 500;
  int n_mc = 100000;  // Monte Carlo size for the optimal-value oracle
  double fdr_level = 0.05;
  std::string out_dir = "results";
  CateConfig cate;
};

inline std::vector<std::string> default_estimators() {
  return {"plugin_lasso",
          "plugin_xgboost",
          "modified_covariates_lasso",
          "modified_covariates_xgboost",
          "augmented_modified_covariates_lasso",
          "augmented_modified_covariates_xgboost",
          "aipw_lasso",
          "aipw_super_learner",
          "causal_forest"};
}

inline Strategy parse_strategy(const std::string& id) {
  for (int s = 0; s <= static_cast<int>(Strategy::causal_forest); ++s)
    if (strategy_name(static_cast<Strategy>(s)) == id) return static_cast<Strategy>(s);
  throw std::invalid_argument("unknown estimator id: " + id);
}

struct ReplicateResult {
  std::string dgp;
  int n = 0;
  int replicate = 0;
  std::string estimator;
  bool filtered = false;
  bool failed = false;
  std::string error;
  double mean_test_outcome = std::numeric_limits<double>::quiet_NaN();
  double relative_rule_quality = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> fdp, tnp, tpp;
  double fit_time_seconds = 0.0;
  std::optional<std::vector<int>> selected_tems;
  bool positivity_warning = false;
};

struct SummaryRow {
  std::string dgp;
  std::string estimator;
  bool filtered = false;
  int n = 0;
  double rule_quality = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> fdr_pct, tnr_pct, tpr_pct;
  double mean_fit_time_seconds = 0.0;
  int replicates = 0;
  int failures = 0;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;
};

// ---------------------------------------------------------------------------
// Metrics

// Mean potential outcome on a test set under the rule's assignments.
inline double rule_quality(const ItrRule& rule, const Dataset& test) {
  if (!test.has_potential_outcomes)
    throw std::invalid_argument("rule_quality: test set lacks potential outcomes");
  const Eigen::VectorXd assign = rule.assign(test.w);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < test.n(); ++i)
    sum += assign[i] == 1.0 ? test.y1[i] : test.y0[i];
  return sum / static_cast<double>(test.n());
}

inline double relative_rule_quality(double value, double optimal_value) {
  if (std::abs(optimal_value) < 1e-9)
    throw std::domain_error("relative_rule_quality: optimal value is numerically zero");
  return value / optimal_value;
}

struct InterpretabilityMetrics {
  double fdp = 0.0;
  double tnp = 0.0;
  double tpp = 0.0;
};

// fdp uses the empty-prediction convention fdp(emptyset) = 0.
inline InterpretabilityMetrics interpretability_metrics(const std::vector<int>& predicted,
                                                        const std::vector<int>& truth, int p) {
  std::vector<char> is_pred(p, 0), is_true(p, 0);
  for (int j : predicted) {
    if (j < 0 || j >= p) throw std::invalid_argument("interpretability_metrics: index range");
    is_pred[j] = 1;
  }
  for (int j : truth) {
    if (j < 0 || j >= p) throw std::invalid_argument("interpretability_metrics: index range");
    is_true[j] = 1;
  }
  int n_pred = 0, n_true = 0, false_disc = 0, true_pos = 0, true_neg = 0;
  for (int j = 0; j < p; ++j) {
    n_pred += is_pred[j];
    n_true += is_true[j];
    false_disc += is_pred[j] && !is_true[j];
    true_pos += is_pred[j] && is_true[j];
    true_neg += !is_pred[j] && !is_true[j];
  }
  InterpretabilityMetrics m;
  m.fdp = n_pred == 0 ? 0.0 : static_cast<double>(false_disc) / n_pred;
  m.tpp = n_true == 0 ? 1.0 : static_cast<double>(true_pos) / n_true;
  m.tnp = p == n_true ? 1.0 : static_cast<double>(true_neg) / (p - n_true);
  return m;
}

// ---------------------------------------------------------------------------
// Strategy fitting with a per-replicate nuisance cache

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Lazily computed components shared by several estimators within one
// replicate. Each consumer is charged the full compute duration so reported
// fit times do not depend on estimator order.
struct ReplicateCache {
  const Dataset& data;
  std::optional<Eigen::VectorXd> known_pi;
  CateConfig config;  // shared-component seed, independent of the consumer

  std::optional<NuisanceValues> sl;
  double sl_seconds = 0.0;
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> forest;
  double forest_seconds = 0.0;
  std::optional<Eigen::VectorXd> propensity;
  double propensity_seconds = 0.0;

  ReplicateCache(const Dataset& d, std::optional<Eigen::VectorXd> pi, const CateConfig& cc)
      : data(d), known_pi(std::move(pi)), config(cc) {}

  const NuisanceValues& sl_nuisances() {
    if (!sl) {
      const auto t0 = std::chrono::steady_clock::now();
      sl = estimate_nuisances(data, known_pi, config);
      sl_seconds = seconds_since(t0);
    }
    return *sl;
  }
  const std::pair<Eigen::VectorXd, Eigen::VectorXd>& forest_nuisances() {
    if (!forest) {
      const auto t0 = std::chrono::steady_clock::now();
      forest = estimate_forest_nuisances(data, known_pi, config);
      forest_seconds = seconds_since(t0);
    }
    return *forest;
  }
  const Eigen::VectorXd& propensity_hat() {
    if (!propensity) {
      if (known_pi) {
        propensity = *known_pi;
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        propensity = fit_propensity_lasso(data, config);
        propensity_seconds = seconds_since(t0);
      }
    }
    return *propensity;
  }
};

struct StrategyFit {
  CateModel model;
  double shared_seconds = 0.0;  // cached-component time charged to this fit
};

// Fits one strategy on `data`. When `cache` is null (the filtered path),
// every nuisance is refit on the reduced covariates.
inline StrategyFit fit_strategy(const Dataset& data, Strategy strategy,
                                const std::optional<Eigen::VectorXd>& known_pi,
                                const CateConfig& config, ReplicateCache* cache) {
  StrategyFit out;
  const auto pi_hat = [&]() -> Eigen::VectorXd {
    if (cache) {
      const Eigen::VectorXd& pi = cache->propensity_hat();
      out.shared_seconds += cache->propensity_seconds;
      return pi;
    }
    return known_pi ? *known_pi : fit_propensity_lasso(data, config);
  };

  switch (strategy) {
    case Strategy::plugin_lasso:
      out.model = fit_plugin(data, PluginLearner::lasso_interactions, config);
      return out;
    case Strategy::plugin_xgboost:
      out.model = fit_plugin(data, PluginLearner::xgboost_two_surface, config);
      return out;
    case Strategy::modified_outcome:
      out.model = fit_modified_outcome(data, pi_hat(), config);
      return out;
    case Strategy::modified_covariates_lasso:
      out.model =
          fit_modified_covariates(data, Family::gaussian, ModCovLearner::lasso, pi_hat(), config);
      return out;
    case Strategy::modified_covariates_xgboost:
      out.model = fit_modified_covariates(data, Family::gaussian, ModCovLearner::xgboost,
                                          pi_hat(), config);
      return out;
    case Strategy::augmented_modified_covariates_lasso:
      out.model = fit_augmented_modified_covariates(data, ModCovLearner::lasso, pi_hat(), config);
      return out;
    case Strategy::augmented_modified_covariates_xgboost:
      out.model =
          fit_augmented_modified_covariates(data, ModCovLearner::xgboost, pi_hat(), config);
      return out;
    case Strategy::aipw_lasso:
    case Strategy::aipw_super_learner: {
      const SecondStage stage =
          strategy == Strategy::aipw_lasso ? SecondStage::lasso : SecondStage::super_learner;
      if (cache) {
        const NuisanceValues& nuis = cache->sl_nuisances();
        out.shared_seconds += cache->sl_seconds;
        out.model = fit_aipw_cate(data, nuis, stage, config);
      } else {
        out.model = fit_aipw_cate(data, estimate_nuisances(data, known_pi, config), stage, config);
      }
      return out;
    }
    case Strategy::causal_forest: {
      if (cache) {
        const auto& [m_hat, pi] = cache->forest_nuisances();
        out.shared_seconds += cache->forest_seconds;
        out.model = fit_causal_forest_cate(data, m_hat, pi, config);
      } else {
        const auto [m_hat, pi] = estimate_forest_nuisances(data, known_pi, config);
        out.model = fit_causal_forest_cate(data, m_hat, pi, config);
      }
      return out;
    }
  }
  throw std::logic_error("fit_strategy: unhandled strategy");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Replicate execution

inline std::vector<ReplicateResult> run_replicate(const ExperimentConfig& config,
                                                  const DgpSpec& spec, const std::string& dgp_id,
                                                  int n, int b,
                                                  const MonteCarloValue& optimal) {
  const std::uint64_t base =
      derive_seed(config.master_seed, dgp_id, static_cast<std::uint64_t>(n),
                  static_cast<std::uint64_t>(b));
  const Dataset learn = sample_dataset(spec, n, derive_seed(base, "learn"));
  const Dataset test = sample_dataset(spec, config.test_size, derive_seed(base, "test"), true);

  std::optional<Eigen::VectorXd> known_pi;
  if (spec.rct()) {
    Eigen::VectorXd pi(learn.n());
    for (Eigen::Index i = 0; i < learn.n(); ++i)
      pi[i] = propensity(spec.propensity_kind, learn.w.row(i));
    known_pi = std::move(pi);
  }

  CateConfig shared_cc = config.cate;
  shared_cc.seed = derive_seed(base, "shared");
  detail::ReplicateCache cache(learn, known_pi, shared_cc);

  // The TEM-VIP selection is computed once per replicate; its cost is part
  // of every filtered estimator's fit time. The observational mode reuses
  // the cached Super Learner nuisances, whose compute time stays attributed
  // to the unfiltered AIPW consumers.
  std::vector<int> filter_selection;
  double filter_seconds = 0.0;
  if (config.run_filtered) {
    NuisanceValues nuis;
    if (spec.rct()) {
      const auto t0 = std::chrono::steady_clock::now();
      CateConfig fc = shared_cc;
      fc.seed = derive_seed(base, "filter");
      nuis = estimate_nuisances_lasso_interactions(learn, *known_pi, fc);
      filter_seconds += detail::seconds_since(t0);
    } else {
      nuis = cache.sl_nuisances();
    }
    const auto t1 = std::chrono::steady_clock::now();
    filter_selection = selected_indices(temvip_report(learn, nuis, config.fdr_level));
    filter_seconds += detail::seconds_since(t1);
  }

  const std::vector<int> truth = spec.true_tem_indices();
  const std::vector<std::string> estimators =
      config.estimators.empty() ? default_estimators() : config.estimators;

  std::vector<ReplicateResult> rows;
  for (const std::string& est_id : estimators) {
    const Strategy strategy = parse_strategy(est_id);
    for (int state = 0; state < 2; ++state) {
      const bool filtered = state == 1;
      if (filtered && !config.run_filtered) continue;
      if (!filtered && !config.run_unfiltered) continue;

      ReplicateResult r;
      r.dgp = dgp_id;
      r.n = n;
      r.replicate = b;
      r.estimator = est_id;
      r.filtered = filtered;
      try {
        CateConfig cc = config.cate;
        cc.seed = derive_seed(base, est_id, filtered ? 1ULL : 0ULL);
        const auto t0 = std::chrono::steady_clock::now();
        detail::StrategyFit fit;
        if (filtered) {
          fit.model = fit_filtered(learn, filter_selection, [&](const Dataset& reduced) {
            return detail::fit_strategy(reduced, strategy, known_pi, cc, nullptr).model;
          });
          fit.shared_seconds = filter_seconds;
        } else {
          fit = detail::fit_strategy(learn, strategy, known_pi, cc, &cache);
        }
        r.fit_time_seconds = detail::seconds_since(t0) + fit.shared_seconds;
        r.positivity_warning = fit.model.diagnostics.positivity_warning;

        const ItrRule rule{fit.model};
        r.mean_test_outcome = rule_quality(rule, test);
        try {
          r.relative_rule_quality = relative_rule_quality(r.mean_test_outcome, optimal.value);
        } catch (const std::domain_error&) {
          // Raw value retained; the ratio stays NaN.
        }

        const std::optional<std::vector<int>> tems = classify_tems(fit.model);
        if (tems) {
          r.selected_tems = tems;
          const auto m = interpretability_metrics(*tems, truth, spec.p);
          r.fdp = m.fdp;
          r.tnp = m.tnp;
          r.tpp = m.tpp;
        }
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Aggregation

inline SummaryTable aggregate(const std::vector<ReplicateResult>& results) {
  if (results.empty()) throw std::invalid_argument("aggregate: no results");
  struct Group {
    SummaryRow row;
    double quality_sum = 0.0;
    double time_sum = 0.0;
    double fdp_sum = 0.0, tnp_sum = 0.0, tpp_sum = 0.0;
    int n_ok = 0, n_interp = 0;
  };
  std::vector<Group> groups;
  std::map<std::tuple<std::string, std::string, bool, int>, std::size_t> index;
  for (const auto& r : results) {
    const auto key = std::make_tuple(r.dgp, r.estimator, r.filtered, r.n);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.emplace_back();
      Group& g = groups.back();
      g.row.dgp = r.dgp;
      g.row.estimator = r.estimator;
      g.row.filtered = r.filtered;
      g.row.n = r.n;
    }
    Group& g = groups[it->second];
    ++g.row.replicates;
    if (r.failed) {
      ++g.row.failures;
      continue;
    }
    ++g.n_ok;
    g.quality_sum += r.relative_rule_quality;
    g.time_sum += r.fit_time_seconds;
    if (r.fdp) {
      ++g.n_interp;
      g.fdp_sum += *r.fdp;
      g.tnp_sum += *r.tnp;
      g.tpp_sum += *r.tpp;
    }
  }
  SummaryTable table;
  for (auto& g : groups) {
    if (g.n_ok > 0) {
      g.row.rule_quality = g.quality_sum / g.n_ok;
      g.row.mean_fit_time_seconds = g.time_sum / g.n_ok;
    }
    if (g.n_interp > 0) {
      g.row.fdr_pct = 100.0 * g.fdp_sum / g.n_interp;
      g.row.tnr_pct = 100.0 * g.tnp_sum / g.n_interp;
      g.row.tpr_pct = 100.0 * g.tpp_sum / g.n_interp;
    }
    table.rows.push_back(g.row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Config file grammar: one `key = value` per line, `#` comments, lists
// comma-separated. Unknown keys are errors.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
}

}  // namespace detail

inline void validate_experiment_config(const ExperimentConfig& config) {
  if (config.replicates < 1) throw std::invalid_argument("config: replicates must be >= 1");
  if (config.test_size < 1) throw std::invalid_argument("config: test_size must be >= 1");
  if (config.p < 1) throw std::invalid_argument("config: p must be >= 1");
  if (!(config.fdr_level > 0.0 && config.fdr_level < 1.0))
    throw std::invalid_argument("config: fdr_level must lie in (0,1)");
  if (config.dgps.empty()) throw std::invalid_argument("config: no dgps given");
  for (const auto& id : config.dgps) make_dgp_spec(id, config.p);  // throws on bad id
  for (const auto& est : config.estimators) parse_strategy(est);
  for (int n : config.sample_sizes)
    if (n < 10) throw std::invalid_argument("config: sample sizes must be >= 10");
  if (!config.run_filtered && !config.run_unfiltered)
    throw std::invalid_argument("config: at least one filter state must run");
}

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));

    if (key == "dgps") {
      config.dgps = detail::split_list(value);
    } else if (key == "sample_sizes") {
      config.sample_sizes.clear();
      for (const auto& v : detail::split_list(value))
        config.sample_sizes.push_back(detail::parse_int(key, v));
    } else if (key == "test_size") {
      config.test_size = detail::parse_int(key, value);
    } else if (key == "replicates") {
      config.replicates = detail::parse_int(key, value);
    } else if (key == "estimators") {
      config.estimators = detail::split_list(value);
    } else if (key == "filtered") {
      if (value == "both") {
        config.run_unfiltered = config.run_filtered = true;
      } else if (value == "only") {
        config.run_unfiltered = false;
        config.run_filtered = true;
      } else if (value == "none") {
        config.run_unfiltered = true;
        config.run_filtered = false;
      } else {
        throw std::invalid_argument("config: filtered must be both|only|none");
      }
    } else if (key == "master_seed") {
      config.master_seed = static_cast<std::uint64_t>(std::stoull(value));
    } else if (key == "timing_mode") {
      if (value == "serial") {
        config.timing_mode = TimingMode::serial;
      } else if (value == "parallel") {
        config.timing_mode = TimingMode::parallel;
      } else {
        throw std::invalid_argument("config: timing_mode must be serial|parallel");
      }
    } else if (key == "p") {
      config.p = detail::parse_int(key, value);
    } else if (key == "n_mc") {
      config.n_mc = detail::parse_int(key, value);
    } else if (key == "fdr_level") {
      config.fdr_level = detail::parse_double(key, value);
    } else if (key == "out_dir") {
      config.out_dir = value;
    } else if (key == "cv_folds") {
      config.cate.cv_folds = detail::parse_int(key, value);
    } else if (key == "grid_size") {
      config.cate.grid_size = detail::parse_int(key, value);
    } else if (key == "sl_folds") {
      config.cate.sl_folds = detail::parse_int(key, value);
    } else if (key == "sl_rf_trees") {
      config.cate.sl_rf_trees = detail::parse_int(key, value);
    } else if (key == "sl_gbt_rounds") {
      config.cate.sl_gbt_rounds = detail::parse_int(key, value);
    } else if (key == "forest_trees") {
      config.cate.forest.n_trees = detail::parse_int(key, value);
    } else if (key == "boost_rounds") {
      config.cate.boost.n_rounds = detail::parse_int(key, value);
    } else if (key == "cross_fit_folds") {
      config.cate.cross_fit_folds = detail::parse_int(key, value);
    } else {
      throw std::invalid_argument("config: unknown key " + key);
    }
  }
  validate_experiment_config(config);
  return config;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_experiment_config(in);
}

// `desk` shrinks the replicate count and oracle size for single-machine
// runs; `paper` restores the full-scale defaults.
inline void apply_profile(ExperimentConfig& config, const std::string& profile) {
  if (profile == "desk") {
    config.replicates = 20;
    config.n_mc = 100000;
  } else if (profile == "paper") {
    config.replicates = 100;
    config.n_mc = 1000000;
  } else {
    throw std::invalid_argument("unknown profile: " + profile);
  }
}

// ---------------------------------------------------------------------------
// CSV / Markdown emission

namespace detail {

inline std::string csv_sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

inline std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline std::string format_optional(const std::optional<double>& x) {
  return x ? format_double(*x) : "NA";
}

inline std::string format_tems(const std::optional<std::vector<int>>& tems) {
  if (!tems) return "NA";
  std::ostringstream os;
  for (std::size_t k = 0; k < tems->size(); ++k) {
    if (k) os << ';';
    os << (*tems)[k];
  }
  return os.str();
}

}  // namespace detail

inline const char* kResultsCsvHeader =
    "dgp,n,replicate,estimator,filtered,failed,error,mean_test_outcome,"
    "relative_rule_quality,fdp,tnp,tpp,fit_time_seconds,selected_tems,positivity_warning";

inline void write_results_csv(std::ostream& out, const std::vector<ReplicateResult>& results) {
  out << kResultsCsvHeader << "\n";
  for (const auto& r : results) {
    out << r.dgp << ',' << r.n << ',' << r.replicate << ',' << r.estimator << ','
        << (r.filtered ? 1 : 0) << ',' << (r.failed ? 1 : 0) << ','
        << detail::csv_sanitize(r.error) << ',' << detail::format_double(r.mean_test_outcome)
        << ',' << detail::format_double(r.relative_rule_quality) << ','
        << detail::format_optional(r.fdp) << ',' << detail::format_optional(r.tnp) << ','
        << detail::format_optional(r.tpp) << ',' << detail::format_double(r.fit_time_seconds)
        << ',' << detail::format_tems(r.selected_tems) << ','
        << (r.positivity_warning ? 1 : 0) << "\n";
  }
}

inline std::vector<ReplicateResult> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("results csv: empty file");
  if (line != kResultsCsvHeader) throw std::runtime_error("results csv: unexpected header");
  std::vector<ReplicateResult> out;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    while (f.size() < 15) f.push_back("");
    ReplicateResult r;
    r.dgp = f[0];
    r.n = std::stoi(f[1]);
    r.replicate = std::stoi(f[2]);
    r.estimator = f[3];
    r.filtered = f[4] == "1";
    r.failed = f[5] == "1";
    r.error = f[6];
    r.mean_test_outcome = f[7] == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[7]);
    r.relative_rule_quality =
        f[8] == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[8]);
    if (f[9] != "NA") r.fdp = std::stod(f[9]);
    if (f[10] != "NA") r.tnp = std::stod(f[10]);
    if (f[11] != "NA") r.tpp = std::stod(f[11]);
    r.fit_time_seconds = std::stod(f[12]);
    if (f[13] != "NA") {
      std::vector<int> tems;
      std::stringstream ts(f[13]);
      std::string t;
      while (std::getline(ts, t, ';'))
        if (!t.empty()) tems.push_back(std::stoi(t));
      r.selected_tems = std::move(tems);
    }
    r.positivity_warning = f[14] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const SummaryTable& table) {
  out << "dgp,estimator,filtered,n,rule_quality,fdr_pct,tnr_pct,tpr_pct,"
         "mean_fit_time_seconds,replicates,failures\n";
  for (const auto& r : table.rows) {
    out << r.dgp << ',' << r.estimator << ',' << (r.filtered ? 1 : 0) << ',' << r.n << ','
        << detail::format_double(r.rule_quality) << ',' << detail::format_optional(r.fdr_pct)
        << ',' << detail::format_optional(r.tnr_pct) << ','
        << detail::format_optional(r.tpr_pct) << ','
        << detail::format_double(r.mean_fit_time_seconds) << ',' << r.replicates << ','
        << r.failures << "\n";
  }
}

inline void write_summary_markdown(std::ostream& out, const SummaryTable& table) {
  out << "| DGP | Estimator | Filtered | n | Rule quality | Empirical FDR (%) | "
         "Empirical TNR (%) | Empirical TPR (%) | Mean fit time (sec.) |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  auto fmt = [](double x) {
    if (std::isnan(x)) return std::string("NA");
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << x;
    return os.str();
  };
  auto fmt_opt = [&](const std::optional<double>& x) { return x ? fmt(*x) : std::string("NA"); };
  for (const auto& r : table.rows) {
    out << "| " << r.dgp << " | " << r.estimator << " | " << (r.filtered ? "yes" : "no") << " | "
        << r.n << " | " << fmt(r.rule_quality) << " | " << fmt_opt(r.fdr_pct) << " | "
        << fmt_opt(r.tnr_pct) << " | " << fmt_opt(r.tpr_pct) << " | "
        << fmt(r.mean_fit_time_seconds) << " |\n";
  }
}

// ---------------------------------------------------------------------------
// Full experiment

struct ExperimentOutcome {
  std::vector<ReplicateResult> results;
  SummaryTable summary;
  bool any_failed = false;
};

template <typename Progress>
ExperimentOutcome run_experiment(const ExperimentConfig& config, Progress&& progress) {
  validate_experiment_config(config);
  ExperimentOutcome outcome;
  for (const std::string& dgp_id : config.dgps) {
    const DgpSpec spec = make_dgp_spec(dgp_id, config.p);
    const MonteCarloValue optimal =
        monte_carlo_optimal_value(spec, config.n_mc, derive_seed(config.master_seed, dgp_id));
    for (int n : config.sample_sizes) {
      for (int b = 0; b < config.replicates; ++b) {
        auto rows = run_replicate(config, spec, dgp_id, n, b, optimal);
        for (auto& r : rows) {
          outcome.any_failed = outcome.any_failed || r.failed;
          outcome.results.push_back(std::move(r));
        }
        progress(dgp_id, n, b);
      }
    }
  }
  outcome.summary = aggregate(outcome.results);
  return outcome;
}

inline ExperimentOutcome run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, [](const std::string&, int, int) {});
}

}  // namespace itr

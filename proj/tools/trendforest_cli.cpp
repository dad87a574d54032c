// trendforest command-line front end.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trendforest/trendforest.hpp"

namespace tf = trendforest;

namespace {

struct DataArgs {
  std::string input;
  std::string target;
  std::vector<std::string> features;
  std::vector<std::string> ordinal;
};

struct ForestArgs {
  std::size_t trees = 100;
  std::optional<std::size_t> max_depth;
  std::size_t min_leaf = 1;
  std::optional<std::size_t> mtry;
  bool no_bootstrap = false;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

void add_data_options(CLI::App* cmd, DataArgs& a, bool required) {
  auto* in = cmd->add_option("--input", a.input, "CSV file with a header row");
  auto* tg = cmd->add_option("--target", a.target, "Target column name");
  if (required) {
    in->required()->check(CLI::ExistingFile);
    tg->required();
  }
  cmd->add_option("--features", a.features, "Feature columns (default: all other columns)")->delimiter(',');
  cmd->add_option("--ordinal", a.ordinal, "Ordinal map, col={\"low\":0,\"high\":1}; repeatable");
}

void add_forest_options(CLI::App* cmd, ForestArgs& a) {
  cmd->add_option("--seed", a.seed, "Master seed");
  cmd->add_option("--trees", a.trees, "Number of trees")->check(CLI::PositiveNumber);
  cmd->add_option("--max-depth", a.max_depth, "Maximum tree depth (default: unlimited)");
  cmd->add_option("--min-leaf", a.min_leaf, "Minimum samples per leaf")->check(CLI::PositiveNumber);
  cmd->add_option("--mtry", a.mtry, "Features tried per split (default: ceil(d/3))");
  cmd->add_flag("--no-bootstrap", a.no_bootstrap, "Grow every tree on the full data");
  cmd->add_option("--workers", a.workers, "Worker threads (0 = hardware concurrency)");
}

tf::ForestConfig forest_config(const ForestArgs& a) {
  tf::ForestConfig c;
  c.n_trees = a.trees;
  c.max_depth = a.max_depth;
  c.min_samples_leaf = a.min_leaf;
  c.mtry = a.mtry;
  c.bootstrap = !a.no_bootstrap;
  c.seed = a.seed;
  c.workers = tf::resolve_workers(a.workers);
  return c;
}

tf::Dataset load_data(const DataArgs& a) {
  tf::CsvOptions opts;
  opts.target_column = a.target;
  opts.feature_columns = a.features;
  for (const auto& spec : a.ordinal) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--ordinal expects col=JSON, got: " + spec);
    const auto doc = nlohmann::json::parse(spec.substr(eq + 1));
    if (!doc.is_object()) throw std::invalid_argument("--ordinal map must be a JSON object: " + spec);
    auto& map = opts.ordinal_maps[spec.substr(0, eq)];
    for (const auto& [label, value] : doc.items()) map[label] = value.get<double>();
  }
  tf::Dataset ds = tf::load_csv(a.input, opts);
  if (ds.dropped_rows() > 0) std::cerr << "dropped " << ds.dropped_rows() << " unparseable row(s)\n";
  return ds;
}

tf::RtrNormalization rtr_mode(const std::string& s) {
  return s == "none" ? tf::RtrNormalization::none : tf::RtrNormalization::by_split_count;
}

template <typename Writer>
void write_file(const std::string& path, Writer&& w) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  w(out);
}

// lo:hi:step, inclusive of hi when it lands on the lattice.
std::vector<double> parse_grid(const std::string& s) {
  const auto a = s.find(':');
  const auto b = s.find(':', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos) throw std::invalid_argument("--grid expects lo:hi:step");
  const double lo = std::stod(s.substr(0, a));
  const double hi = std::stod(s.substr(a + 1, b - a - 1));
  const double step = std::stod(s.substr(b + 1));
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("--grid needs step > 0 and lo <= hi");
  std::vector<double> grid;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k) {
    grid.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
  }
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-forest trend estimators and residual feature importance"};
  app.require_subcommand(1);

  // trends
  DataArgs trend_data;
  ForestArgs trend_forest;
  std::string rtr_normalize = "split-count";
  std::string emit_shap, trend_json, trend_csv, trend_model;
  auto* trends = app.add_subcommand("trends", "Trend estimators for every feature");
  add_data_options(trends, trend_data, false);
  add_forest_options(trends, trend_forest);
  trends->add_option("--rtr-normalize", rtr_normalize, "RTR normalization")
      ->check(CLI::IsMember({"split-count", "none"}));
  trends->add_option("--emit-shap", emit_shap, "Write the n x d Shapley matrix as CSV");
  trends->add_option("--model", trend_model, "Saved forest; computes ATR/RTR only, no data needed");
  trends->add_option("--out-json", trend_json, "JSON report path");
  trends->add_option("--out-csv", trend_csv, "CSV report path");

  // fit
  DataArgs fit_data;
  ForestArgs fit_forest;
  std::string fit_out;
  auto* fitcmd = app.add_subcommand("fit", "Fit a forest and save it as JSON");
  add_data_options(fitcmd, fit_data, true);
  add_forest_options(fitcmd, fit_forest);
  fitcmd->add_option("--out", fit_out, "Model path")->required();

  // importance
  DataArgs imp_data;
  ForestArgs imp_forest;
  std::string method = "all", weight = "r", imp_json, imp_csv;
  tf::ImportanceOptions imp_opts;
  auto* imp = app.add_subcommand("importance", "Feature importance scores");
  add_data_options(imp, imp_data, true);
  add_forest_options(imp, imp_forest);
  imp->add_option("--method", method, "Estimator")
      ->check(CLI::IsMember({"impurity", "permutation", "residual-rf", "residual-gs", "all"}));
  imp->add_option("--perms", imp_opts.permutations, "Feature orders per feature")->check(CLI::PositiveNumber);
  imp->add_option("--repeats", imp_opts.repeats, "Shuffles per feature for permutation importance")
      ->check(CLI::PositiveNumber);
  imp->add_flag("--gs-literal", imp_opts.gs_literal, "Use the literal self-covariance Gram-Schmidt form");
  imp->add_option("--weight", weight, "Chain weight: pearson r or R^2")->check(CLI::IsMember({"r", "r2"}));
  imp->add_option("--out-json", imp_json, "JSON report path");
  imp->add_option("--out-csv", imp_csv, "CSV report path");

  // gen-synth
  std::string synth_name, synth_out;
  std::uint64_t synth_seed = 0;
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset as CSV");
  gen->add_option("--dataset", synth_name, "Dataset")
      ->required()
      ->check(CLI::IsMember({"syn1-base", "syn1-noise", "syn2", "syn3"}));
  gen->add_option("--seed", synth_seed, "Seed");
  gen->add_option("--out", synth_out, "Output CSV (default: stdout)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Repeated-trial experiments");
  exp->require_subcommand(1);
  DataArgs exp_data;
  ForestArgs exp_forest;
  std::string exp_dataset = "syn1-base", exp_out = "experiment_out", grid = "0.01:1:0.01";
  std::uint64_t data_seed = 0;
  std::size_t trials = 250, iterations = 100, runs = 20;
  double fraction = 0.7;
  std::string exp_rtr = "split-count";
  tf::ImportanceOptions exp_imp;
  auto add_exp_common = [&](CLI::App* c) {
    add_data_options(c, exp_data, false);
    add_forest_options(c, exp_forest);
    c->add_option("--dataset", exp_dataset, "Synthetic source when --input is absent")
        ->check(CLI::IsMember({"syn1-base", "syn2", "syn3"}));
    c->add_option("--data-seed", data_seed, "Seed for the synthetic source");
    c->add_option("--out-dir", exp_out, "Output directory");
  };
  auto* sweep = exp->add_subcommand("noise-sweep", "Trend estimators under increasing noise mixing");
  add_exp_common(sweep);
  sweep->add_option("--trials", trials, "Noise datasets")->check(CLI::PositiveNumber);
  sweep->add_option("--grid", grid, "Mixing weights lo:hi:step");
  sweep->add_option("--rtr-normalize", exp_rtr)->check(CLI::IsMember({"split-count", "none"}));
  auto* boot = exp->add_subcommand("bootstrap", "Trend estimators over random subsets");
  add_exp_common(boot);
  boot->add_option("--iterations", iterations, "Subsets")->check(CLI::PositiveNumber);
  boot->add_option("--fraction", fraction, "Subset fraction")->check(CLI::Range(0.0, 1.0));
  boot->add_option("--rtr-normalize", exp_rtr)->check(CLI::IsMember({"split-count", "none"}));
  auto* impruns = exp->add_subcommand("importance-runs", "Repeated importance reports");
  add_exp_common(impruns);
  impruns->add_option("--runs", runs, "Runs")->check(CLI::PositiveNumber);
  impruns->add_option("--perms", exp_imp.permutations, "Feature orders per feature")->check(CLI::PositiveNumber);
  impruns->add_option("--repeats", exp_imp.repeats, "Permutation shuffles")->check(CLI::PositiveNumber);
  impruns->add_flag("--gs-literal", exp_imp.gs_literal, "Literal Gram-Schmidt form");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*trends) {
      tf::TrendOptions options;
      options.rtr_normalization = rtr_mode(rtr_normalize);
      options.workers = tf::resolve_workers(trend_forest.workers);
      tf::TrendReport report;
      if (!trend_model.empty()) {
        report = tf::traversal_report(tf::load_forest(trend_model), options);
      } else {
        if (trend_data.input.empty() || trend_data.target.empty()) {
          throw std::invalid_argument("trends needs --input and --target, or --model");
        }
        const tf::Dataset ds = load_data(trend_data);
        tf::ShapleyMatrix shap;
        report = tf::trend_report(ds, forest_config(trend_forest), options, &shap);
        write_file(emit_shap, [&](std::ostream& o) { tf::write_shapley_csv(o, shap, ds.feature_names()); });
      }
      write_file(trend_json, [&](std::ostream& o) { o << tf::to_json(report).dump(2) << '\n'; });
      write_file(trend_csv, [&](std::ostream& o) { tf::write_csv(o, report); });
      if (trend_json.empty() && trend_csv.empty()) tf::write_csv(std::cout, report);
    } else if (*fitcmd) {
      tf::save_forest(tf::fit(load_data(fit_data), forest_config(fit_forest)), fit_out);
    } else if (*imp) {
      imp_opts.impurity = method == "all" || method == "impurity";
      imp_opts.permutation = method == "all" || method == "permutation";
      imp_opts.residual_rf = method == "all" || method == "residual-rf";
      imp_opts.residual_gs = method == "all" || method == "residual-gs";
      imp_opts.weight = weight == "r2" ? tf::WeightMetric::r_squared : tf::WeightMetric::pearson;
      const auto report = tf::importance_report(load_data(imp_data), forest_config(imp_forest), imp_opts);
      write_file(imp_json, [&](std::ostream& o) { o << tf::to_json(report).dump(2) << '\n'; });
      write_file(imp_csv, [&](std::ostream& o) { tf::write_csv(o, report); });
      if (imp_json.empty() && imp_csv.empty()) tf::write_csv(std::cout, report);
    } else if (*gen) {
      tf::Dataset ds = [&] {
        if (synth_name == "syn2") return tf::synth::gen_syn2(synth_seed);
        if (synth_name == "syn3") return tf::synth::gen_syn3(synth_seed);
        tf::synth::Syn1Spec spec;
        spec.seed = synth_seed;
        if (synth_name == "syn1-noise") return tf::synth::gen_noise_like(spec, tf::SeededRng(synth_seed, 1));
        return tf::synth::gen_base(spec, tf::SeededRng(synth_seed));
      }();
      if (synth_out.empty()) {
        tf::write_csv(std::cout, ds);
      } else {
        write_file(synth_out, [&](std::ostream& o) { tf::write_csv(o, ds); });
      }
    } else if (*exp) {
      const tf::Dataset source = [&] {
        if (!exp_data.input.empty()) {
          if (exp_data.target.empty()) throw std::invalid_argument("--input needs --target");
          return load_data(exp_data);
        }
        if (exp_dataset == "syn2") return tf::synth::gen_syn2(data_seed);
        if (exp_dataset == "syn3") return tf::synth::gen_syn3(data_seed);
        tf::synth::Syn1Spec spec;
        spec.seed = data_seed;
        return tf::synth::gen_base(spec, tf::SeededRng(data_seed));
      }();
      tf::ForestConfig config = forest_config(exp_forest);
      tf::harness::RunOptions run;
      run.workers = config.workers;
      run.trends.rtr_normalization = rtr_mode(exp_rtr);
      tf::harness::ExperimentResult result;
      if (*sweep) {
        // mixing assumes a standardized base
        const tf::Dataset base = exp_data.input.empty() ? source : tf::standardize(source).first;
        result = tf::harness::run_noise_sweep(base, trials, parse_grid(grid), config, exp_forest.seed, run);
      } else if (*boot) {
        result = tf::harness::run_bootstrap_trends(source, iterations, fraction, config, exp_forest.seed, run);
      } else {
        result = tf::harness::run_importance_runs(source, runs, exp_imp, config, exp_forest.seed, run);
      }
      tf::harness::write_experiment(exp_out, result);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

// coval: data valuation over coalitions of dataset owners.
//
//   generate  synthetic owner datasets to CSV
//   distance  pairwise transport distances between coalition datasets
//   kernel    kernel matrix + eigenvalue report for a coalition list
//   value     per-owner values with uncertainty (the full pipeline)
//   metrics   agreement between two value reports
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "coval/pipeline.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw coval::ConfigError(coval::Errc::parse_error, "cannot open: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw coval::ConfigError(coval::Errc::parse_error, path + ": " + e.what());
  }
}

void emit(const std::string& path, const nlohmann::ordered_json& doc) {
  const std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw coval::ConfigError(coval::Errc::bad_parameter, "cannot open for writing: " + path);
  out << text;
  if (!out) throw coval::ConfigError(coval::Errc::bad_parameter, "write failed: " + path);
}

// Accepts decimal bit patterns as strings or integers; owners are the low bits.
std::vector<coval::Coalition> parse_coalitions(const nlohmann::json& j, int n) {
  if (!j.is_array() || j.empty())
    throw coval::ConfigError(coval::Errc::parse_error,
                             "coalition list must be a non-empty JSON array of bit patterns");
  std::vector<coval::Coalition> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    std::uint64_t bits = 0;
    if (item.is_string()) {
      const std::string text = item.get<std::string>();
      const char* end = text.data() + text.size();
      auto [ptr, ec] = std::from_chars(text.data(), end, bits);
      if (ec != std::errc() || ptr != end || text.empty())
        throw coval::ConfigError(coval::Errc::parse_error,
                                 "not a decimal coalition bit pattern: '" + text + "'");
    } else if (item.is_number_unsigned()) {
      bits = item.get<std::uint64_t>();
    } else {
      throw coval::ConfigError(coval::Errc::parse_error,
                               "coalition entries must be decimal strings or unsigned integers");
    }
    if (bits == 0)
      throw coval::ConfigError(coval::Errc::empty_coalition, "the empty coalition cannot be listed");
    if (n < 64 && bits >= (std::uint64_t{1} << n))
      throw coval::ConfigError(coval::Errc::missing_owner,
                               "coalition " + std::to_string(bits) + " references an owner >= " +
                                   std::to_string(n));
    out.emplace_back(bits);
  }
  return out;
}

// Dataset flags shared by distance/kernel/generate; mirrors the RunConfig
// data block so files produced here feed straight into `value`.
struct DataFlags {
  std::string csv;
  std::string generator = "moons";
  int owners = 6;
  int points_per_owner = 32;
  double noise = 0.15;
  double spread = 0.3;
  int classes = 3;
  std::string target_column = "target";
  std::string owner_column = "owner";
  std::string task = "classification";
  std::uint64_t seed = 0;
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--csv", d.csv, "CSV dataset; overrides the generator");
  cmd->add_option("--generator", d.generator, "synthetic source: moons | blobs")
      ->check(CLI::IsMember({"moons", "blobs"}));
  cmd->add_option("--owners", d.owners, "generator owner count");
  cmd->add_option("--points-per-owner", d.points_per_owner, "generator rows per owner");
  cmd->add_option("--noise", d.noise, "moons jitter (standard deviation)");
  cmd->add_option("--spread", d.spread, "blobs cluster spread");
  cmd->add_option("--classes", d.classes, "blobs class count");
  cmd->add_option("--target-column", d.target_column, "CSV target column name");
  cmd->add_option("--owner-column", d.owner_column, "CSV owner column name");
  cmd->add_option("--task", d.task, "classification | regression")
      ->check(CLI::IsMember({"classification", "regression"}));
  cmd->add_option("--seed", d.seed, "random seed");
}

coval::ProblemData load_data(const DataFlags& d) {
  coval::RunConfig cfg;
  cfg.csv = d.csv;
  cfg.generator = d.csv.empty() ? d.generator : std::string();
  cfg.owners = d.owners;
  cfg.points_per_owner = d.points_per_owner;
  cfg.noise = d.noise;
  cfg.spread = d.spread;
  cfg.classes = d.classes;
  cfg.target_column = d.target_column;
  cfg.owner_column = d.owner_column;
  cfg.task = d.task;
  cfg.seed = d.seed;
  return coval::load_problem_data(cfg);
}

std::vector<coval::Coalition> coalition_list(const std::string& path, int n) {
  if (path.empty()) {
    std::vector<coval::Coalition> singletons;
    for (int i = 0; i < n; ++i) singletons.push_back(coval::Coalition::single(i));
    return singletons;
  }
  return parse_coalitions(load_json(path), n);
}

int run_generate(const DataFlags& data, const std::string& output) {
  coval::ProblemData problem = load_data(data);
  coval::TabularData table;
  table.task = problem.task;
  table.owner_names = problem.owner_names;
  table.class_names = problem.class_names;
  const Eigen::Index m = problem.owners.front().features.cols();
  for (Eigen::Index j = 0; j < m; ++j) table.feature_names.push_back("x" + std::to_string(j));
  table.owners = std::move(problem.owners);
  coval::write_csv(output, table);
  return 0;
}

int run_distance(const DataFlags& data, const std::string& metric, int p, double eta,
                 int projections, const std::string& aggregation, const std::string& coalitions_path,
                 const std::string& output) {
  coval::ProblemData problem = load_data(data);
  const int n = static_cast<int>(problem.owners.size());
  const std::vector<coval::Coalition> coalitions = coalition_list(coalitions_path, n);

  coval::DistanceKind kind;
  if (metric == "sw")
    kind = p == 1 ? coval::DistanceKind::raw_p1 : coval::DistanceKind::raw_p2;
  else if (metric == "ssw")
    kind = p == 1 ? coval::DistanceKind::ssw_p1 : coval::DistanceKind::ssw_p2;
  else
    kind = p == 1 ? coval::DistanceKind::otdd_p1 : coval::DistanceKind::otdd_p2;
  const coval::SliceAggregation agg = aggregation == "root-of-mean"
                                          ? coval::SliceAggregation::root_of_mean
                                          : coval::SliceAggregation::per_slice_root;

  coval::DistanceProvider provider(problem.owners, problem.task, projections, data.seed);
  provider.prepare(coalitions, kind, eta);

  nlohmann::ordered_json doc;
  doc["metric"] = metric;
  doc["p"] = p;
  if (metric == "ssw") doc["eta"] = eta;
  if (metric != "otdd") {
    doc["projections"] = projections;
    doc["aggregation"] = aggregation;
  }
  doc["seed"] = data.seed;
  nlohmann::ordered_json matrix;
  for (coval::Coalition a : coalitions) {
    nlohmann::ordered_json row;
    for (coval::Coalition b : coalitions)
      row[std::to_string(b.bits())] = provider.distance(kind, a, b, eta, agg);
    matrix[std::to_string(a.bits())] = std::move(row);
  }
  doc["distances"] = std::move(matrix);
  emit(output, doc);
  return 0;
}

int run_kernel(const DataFlags& data, const std::string& family_name, double gamma, double eta,
               double rho, int projections, double tolerance, const std::string& coalitions_path,
               int threads, const std::string& output) {
  coval::ProblemData problem = load_data(data);
  const int n = static_cast<int>(problem.owners.size());
  const std::vector<coval::Coalition> coalitions = coalition_list(coalitions_path, n);

  coval::KernelSpec spec;
  spec.family = coval::kernel_family_from_string(family_name);
  spec.gamma = gamma;
  spec.eta = eta;
  spec.sw.rho = rho;
  spec.sw.p = spec.family == coval::KernelFamily::ssw_l1_exp ? 1 : 2;
  spec.sw.projections = projections;
  spec.sw.seed = data.seed;

  coval::DistanceProvider provider(problem.owners, problem.task, projections, data.seed);
  const coval::KernelMatrix k = coval::build_matrix(spec, coalitions, coalitions, provider, threads);
  const coval::PsdReport psd = coval::psd_check(k, tolerance);

  nlohmann::ordered_json doc;
  doc["family"] = family_name;
  doc["gamma"] = gamma;
  doc["eta"] = eta;
  doc["rho"] = rho;
  doc["projections"] = projections;
  doc["seed"] = data.seed;
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (coval::Coalition c : coalitions) names.push_back(std::to_string(c.bits()));
  doc["coalitions"] = std::move(names);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < k.values.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < k.values.cols(); ++j) row.push_back(k.values(i, j));
    rows.push_back(std::move(row));
  }
  doc["matrix"] = std::move(rows);
  doc["min_eigenvalue"] = psd.min_eigenvalue;
  doc["max_eigenvalue"] = psd.max_eigenvalue;
  doc["tolerance"] = tolerance;
  doc["psd"] = psd.pass;
  emit(output, doc);
  return 0;
}

int run_metrics(const std::string& estimate_path, const std::string& reference_path,
                const std::string& output) {
  const coval::AgreementMetrics m =
      coval::compare_reports(load_json(estimate_path), load_json(reference_path));
  nlohmann::ordered_json doc;
  doc["estimate"] = estimate_path;
  doc["reference"] = reference_path;
  doc["mse"] = m.mse;
  doc["pearson"] = m.pearson;
  doc["tau"] = m.tau;
  emit(output, doc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coval: cooperative-game data valuation with transport kernels"};
  app.require_subcommand(1);

  // --- generate ---
  auto* generate = app.add_subcommand("generate", "Write a synthetic owner dataset to CSV");
  DataFlags gen_data;
  std::string gen_output;
  add_data_flags(generate, gen_data);
  generate->get_option("--csv")->group("");  // generate is generator-only
  generate->add_option("--output", gen_output, "CSV path to write")->required();

  // --- distance ---
  auto* distance = app.add_subcommand("distance", "Pairwise distances between coalition datasets");
  DataFlags dist_data;
  std::string dist_metric = "ssw";
  int dist_p = 2;
  double dist_eta = 0.5;
  int dist_projections = 100;
  std::string dist_aggregation = "per-slice-root";
  std::string dist_coalitions, dist_output;
  add_data_flags(distance, dist_data);
  distance->add_option("--metric", dist_metric, "sw | ssw | otdd")
      ->check(CLI::IsMember({"sw", "ssw", "otdd"}));
  distance->add_option("--p", dist_p, "transport order")->check(CLI::IsMember({1, 2}));
  distance->add_option("--eta", dist_eta, "supervised mix in (0,1] (ssw)");
  distance->add_option("--projections", dist_projections, "projection count L");
  distance->add_option("--aggregation", dist_aggregation,
                       "slice aggregation: per-slice-root | root-of-mean")
      ->check(CLI::IsMember({"per-slice-root", "root-of-mean"}));
  distance->add_option("--coalitions", dist_coalitions,
                       "JSON array of coalition bit patterns (default: singletons)");
  distance->add_option("--output", dist_output, "write JSON here instead of stdout");

  // --- kernel ---
  auto* kernel = app.add_subcommand("kernel", "Kernel matrix and eigenvalue report");
  DataFlags kern_data;
  std::string kern_family = "ssw_sq_exp";
  double kern_gamma = 1.0, kern_eta = 0.5, kern_rho = 1.0, kern_tolerance = 1e-8;
  int kern_projections = 100, kern_threads = 0;
  std::string kern_coalitions, kern_output;
  add_data_flags(kernel, kern_data);
  kernel->add_option("--family", kern_family, "ssw_sq_exp | ssw_l1_exp | binary_rbf | otdd_exp");
  kernel->add_option("--gamma", kern_gamma, "kernel bandwidth (> 0)");
  kernel->add_option("--eta", kern_eta, "supervised mix in (0,1]");
  kernel->add_option("--rho", kern_rho, "distance exponent scale in (0,1]");
  kernel->add_option("--projections", kern_projections, "projection count L");
  kernel->add_option("--tolerance", kern_tolerance, "PSD tolerance (relative to max eigenvalue)");
  kernel->add_option("--coalitions", kern_coalitions,
                     "JSON array of coalition bit patterns (default: singletons)");
  kernel->add_option("--threads", kern_threads, "worker threads (0 = machine parallelism)");
  kernel->add_option("--output", kern_output, "write JSON here instead of stdout");

  // --- value ---
  auto* value = app.add_subcommand("value", "Per-owner values with uncertainty");
  std::string value_config;
  coval::RunConfig flags;  // holds flag values; merged over the config file below
  value->add_option("--config", value_config, "JSON config file (flags win over it)");
  auto* o_csv = value->add_option("--csv", flags.csv, "CSV dataset");
  auto* o_generator = value->add_option("--generator", flags.generator, "moons | blobs");
  auto* o_owners = value->add_option("--owners", flags.owners, "generator owner count");
  auto* o_ppo = value->add_option("--points-per-owner", flags.points_per_owner, "rows per owner");
  auto* o_noise = value->add_option("--noise", flags.noise, "moons jitter");
  auto* o_spread = value->add_option("--spread", flags.spread, "blobs spread");
  auto* o_classes = value->add_option("--classes", flags.classes, "blobs class count");
  auto* o_target = value->add_option("--target-column", flags.target_column, "CSV target column");
  auto* o_owner_col = value->add_option("--owner-column", flags.owner_column, "CSV owner column");
  auto* o_task = value->add_option("--task", flags.task, "classification | regression");
  auto* o_val_csv =
      value->add_option("--validation-csv", flags.validation_csv, "validation rows for the utility");
  auto* o_utility =
      value->add_option("--utility", flags.utility, "knn:k | ridge:lambda | logistic | table:path");
  std::vector<std::string> family_flags;
  auto* o_families = value->add_option("--family", family_flags, "kernel families for the search")
                         ->delimiter(',');
  auto* o_projections = value->add_option("--projections", flags.projections, "projection count L");
  auto* o_method = value->add_option("--method", flags.method, "exact | permutation");
  auto* o_semivalue = value->add_option("--semivalue", flags.semivalue, "shapley | banzhaf");
  auto* o_budget = value->add_option("--budget", flags.budget, "permutation coalition target");
  auto* o_actual =
      value->add_option("--actual-fraction", flags.actual_fraction, "share evaluated, in (0,1]");
  auto* o_active = value->add_option("--active-fraction", flags.active_fraction,
                                     "share of the remainder picked greedily, in [0,1]");
  auto* o_seed = value->add_option("--seed", flags.seed, "random seed");
  auto* o_threads = value->add_option("--threads", flags.threads, "worker threads");
  auto* o_output = value->add_option("--output", flags.output, "report JSON path");
  auto* o_curve = value->add_option("--curve", flags.curve, "convergence CSV path");

  // --- metrics ---
  auto* metrics = app.add_subcommand("metrics", "Agreement between two value reports");
  std::string metrics_estimate, metrics_reference, metrics_output;
  metrics->add_option("estimate", metrics_estimate, "report JSON to score")->required();
  metrics->add_option("reference", metrics_reference, "report JSON to score against")->required();
  metrics->add_option("--output", metrics_output, "write JSON here instead of stdout");

  int status = 0;
  generate->callback([&] { status = run_generate(gen_data, gen_output); });
  distance->callback([&] {
    status = run_distance(dist_data, dist_metric, dist_p, dist_eta, dist_projections,
                          dist_aggregation, dist_coalitions, dist_output);
  });
  kernel->callback([&] {
    status = run_kernel(kern_data, kern_family, kern_gamma, kern_eta, kern_rho, kern_projections,
                        kern_tolerance, kern_coalitions, kern_threads, kern_output);
  });
  value->callback([&] {
    coval::RunConfig cfg;
    if (!value_config.empty()) cfg = coval::RunConfig::from_json(load_json(value_config));
    if (o_csv->count()) cfg.csv = flags.csv;
    if (o_generator->count()) cfg.generator = flags.generator;
    if (o_csv->count() && !o_generator->count()) cfg.generator.clear();
    if (o_generator->count() && !o_csv->count()) cfg.csv.clear();
    if (o_owners->count()) cfg.owners = flags.owners;
    if (o_ppo->count()) cfg.points_per_owner = flags.points_per_owner;
    if (o_noise->count()) cfg.noise = flags.noise;
    if (o_spread->count()) cfg.spread = flags.spread;
    if (o_classes->count()) cfg.classes = flags.classes;
    if (o_target->count()) cfg.target_column = flags.target_column;
    if (o_owner_col->count()) cfg.owner_column = flags.owner_column;
    if (o_task->count()) cfg.task = flags.task;
    if (o_val_csv->count()) cfg.validation_csv = flags.validation_csv;
    if (o_utility->count()) cfg.utility = flags.utility;
    if (o_families->count()) cfg.families = family_flags;
    if (o_projections->count()) cfg.projections = flags.projections;
    if (o_method->count()) cfg.method = flags.method;
    if (o_semivalue->count()) cfg.semivalue = flags.semivalue;
    if (o_budget->count()) cfg.budget = flags.budget;
    if (o_actual->count()) cfg.actual_fraction = flags.actual_fraction;
    if (o_active->count()) cfg.active_fraction = flags.active_fraction;
    if (o_seed->count()) cfg.seed = flags.seed;
    if (o_threads->count()) cfg.threads = flags.threads;
    if (o_output->count()) cfg.output = flags.output;
    if (o_curve->count()) cfg.curve = flags.curve;
    const coval::ValuationResult result = coval::run_valuation(cfg);
    if (cfg.output.empty()) std::cout << result.document.dump(2) << "\n";
    status = 0;
  });
  metrics->callback([&] { status = run_metrics(metrics_estimate, metrics_reference, metrics_output); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const coval::ConfigError& e) {
    std::cerr << "coval: " << e.what() << "\n";
    return 2;
  } catch (const coval::Error& e) {
    std::cerr << "coval: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "coval: " << e.what() << "\n";
    return 3;
  }
  return status;
}

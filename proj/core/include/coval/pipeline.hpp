#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coval/active.hpp"
#include "coval/gp.hpp"
#include "coval/metrics.hpp"
#include "coval/semivalue.hpp"
#include "coval/utility.hpp"

namespace coval {

// Everything one valuation run needs, loadable from a JSON file with CLI
// flags layered on top (flags win).  validate() runs before any computation.
struct RunConfig {
  // Data: exactly one of csv / generator.
  std::string csv;                    // path to a CSV with owner + target columns
  std::string generator;              // "moons" | "blobs"
  int owners = 6;                     // generator owner count
  int points_per_owner = 32;          // generator rows per owner
  double noise = 0.15;                // moons jitter (std dev)
  double spread = 0.3;                // blobs cluster spread
  int classes = 3;                    // blobs class count (centers on a circle)
  std::string target_column = "target";
  std::string owner_column = "owner";
  std::string task = "classification";
  std::string validation_csv;         // required for model-backed utilities on CSV data

  // Utility: "knn:k" | "ridge:lambda" | "logistic" | "table:path".
  std::string utility = "knn:5";

  // Kernel families entered into the hyperparameter search.
  std::vector<std::string> families = {"ssw_sq_exp", "ssw_l1_exp"};
  int projections = 100;

  // Method.
  std::string method = "exact";       // "exact" | "permutation"
  std::string semivalue = "shapley";  // "shapley" | "banzhaf" (exact only)
  int budget = 0;                     // permutation: target coalition count (0 = 8n)
  double actual_fraction = 0.5;       // f: share of coalitions actually evaluated
  double active_fraction = 0.0;       // g: share of the remainder picked greedily
  std::uint64_t seed = 0;
  int threads = 0;                    // 0 = machine parallelism

  // Outputs (empty = skip the file).
  std::string output;                 // report JSON
  std::string curve;                  // convergence CSV (mean +/- 1 sigma per owner)

  static RunConfig from_json(const nlohmann::json& j);  // unknown keys rejected
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

// The dataset a config points at, plus the naming side-tables reports carry.
struct ProblemData {
  std::vector<OwnerDataset> owners;
  Task task = Task::classification;
  std::vector<std::string> owner_names;
  std::vector<std::string> class_names;  // classification only
};

// Loads the CSV or runs the generator named by the config (only the data
// fields are read), validates the owners, and returns them with their names.
ProblemData load_problem_data(const RunConfig& config);

struct ValuationResult {
  SemivalueReport report;
  std::vector<Coalition> actual;       // A, in evaluation order (grand coalition first)
  std::vector<Coalition> predicted;    // B
  Eigen::VectorXd actual_utilities;    // aligned with `actual`
  std::optional<GPModel> model;        // absent when nothing was predicted
  Posterior posterior;                 // aligned with `predicted`
  std::size_t transport_evaluations = 0;
  std::size_t permutations = 0;        // permutation method only
  nlohmann::ordered_json document;     // the report JSON (written to config.output if set)
};

// The full driver: load/generate data, enumerate or sample coalitions, split
// into evaluated/predicted (optionally growing the evaluated side greedily),
// evaluate, fit, predict, assemble per-owner values with uncertainty, and
// write the requested artifacts.  Deterministic given the config.
ValuationResult run_valuation(const RunConfig& config);

// Agreement between two report documents (per-owner means must cover the
// same owners; OwnerMismatch otherwise).
struct AgreementMetrics {
  double mse = 0.0;
  double pearson = 0.0;
  double tau = 0.0;
};

AgreementMetrics compare_reports(const nlohmann::json& estimate, const nlohmann::json& reference);

// Runs each config, groups runs that differ only in seed/output paths, and
// summarizes agreement with the reference values (mean and sample std across
// the group's seeds).
struct MethodComparison {
  std::string label;
  int runs = 0;
  double mse_mean = 0.0, mse_std = 0.0;
  double pearson_mean = 0.0, pearson_std = 0.0;
  double tau_mean = 0.0, tau_std = 0.0;
};

std::vector<MethodComparison> compare_methods(std::span<const RunConfig> configs,
                                              const Eigen::VectorXd& reference);

// Reads a "coalition bits (decimal string) -> utility" JSON table.
std::unordered_map<std::uint64_t, double> load_utility_table(const std::string& path);

}  // namespace coval

#include "coval/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "coval/dataset.hpp"

namespace coval {

namespace {

constexpr std::uint64_t kSplitTag = 0x53504c4954;    // coalition partition stream
constexpr std::uint64_t kHoldoutTag = 0x484f4c44;    // generator validation stream

// Desk-scale guards: the GP path materializes a |B| x |B| covariance and the
// grid search runs O(|A|^3) factorizations per candidate.
constexpr std::size_t kMaxActual = 1024;
constexpr std::size_t kMaxPredicted = 4096;

int parse_int(const std::string& text, const std::string& what) {
  int value = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(Errc::parse_error, what + ": not an integer: '" + text + "'");
  return value;
}

double parse_positive_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(value) || value < 0.0) throw std::invalid_argument("");
    return value;
  } catch (const std::exception&) {
    throw ConfigError(Errc::parse_error, what + ": not a non-negative number: '" + text + "'");
  }
}

struct UtilitySpec {
  UtilityFn::Kind kind = UtilityFn::Kind::knn;
  int k = 5;
  double lambda = 1e-3;
  std::string table_path;
};

UtilitySpec parse_utility(const std::string& text) {
  UtilitySpec spec;
  const std::size_t colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : text.substr(colon + 1);
  if (head == "knn") {
    spec.kind = UtilityFn::Kind::knn;
    if (!arg.empty()) spec.k = parse_int(arg, "knn neighbor count");
    if (spec.k < 1) throw ConfigError(Errc::bad_parameter, "knn neighbor count must be >= 1");
  } else if (head == "ridge") {
    spec.kind = UtilityFn::Kind::ridge;
    if (!arg.empty()) spec.lambda = parse_positive_double(arg, "ridge penalty");
  } else if (head == "logistic") {
    spec.kind = UtilityFn::Kind::logistic;
    if (!arg.empty())
      throw ConfigError(Errc::bad_parameter, "the logistic utility takes no argument");
  } else if (head == "table") {
    spec.kind = UtilityFn::Kind::table;
    spec.table_path = arg;
    if (spec.table_path.empty())
      throw ConfigError(Errc::bad_parameter, "table utility needs a file path: table:<path>");
  } else {
    throw ConfigError(Errc::bad_parameter,
                      "unknown utility '" + text + "' (knn:k | ridge:lambda | logistic | table:path)");
  }
  return spec;
}

std::vector<OwnerDataset> generate_owners(const RunConfig& c, std::uint64_t seed) {
  if (c.generator == "moons") return make_moons(c.owners, c.points_per_owner, c.noise, seed);
  // Blobs: class centers evenly spaced on a radius-3 circle, every owner
  // drawing from every class.
  std::vector<Eigen::VectorXd> centers;
  centers.reserve(static_cast<std::size_t>(c.classes));
  for (int k = 0; k < c.classes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / c.classes;
    Eigen::VectorXd center(2);
    center << 3.0 * std::cos(angle), 3.0 * std::sin(angle);
    centers.push_back(center);
  }
  std::vector<int> all_classes(static_cast<std::size_t>(c.classes));
  for (int k = 0; k < c.classes; ++k) all_classes[static_cast<std::size_t>(k)] = k;
  const std::vector<std::vector<int>> assignment(static_cast<std::size_t>(c.owners), all_classes);
  return make_blobs(c.owners, centers, c.spread, assignment, c.points_per_owner, seed);
}

// Validation rows for model-backed utilities: a sibling CSV (same schema and
// label vocabulary as the training file; its owner grouping is ignored), or
// a fresh draw from the generator on a derived seed.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> validation_set(const RunConfig& c, Task task) {
  std::vector<OwnerDataset> host;
  if (!c.csv.empty()) {
    TabularData t = load_csv(c.validation_csv, c.target_column, task, c.owner_column);
    host = std::move(t.owners);
  } else {
    host = generate_owners(c, derive_seed(c.seed, kHoldoutTag));
  }
  const AggregatedDataset pooled = aggregate(host, Coalition::full(static_cast<int>(host.size())));
  return {pooled.features, pooled.targets};
}

UtilityFn build_utility(const RunConfig& c, Task task) {
  const UtilitySpec spec = parse_utility(c.utility);
  if (spec.kind == UtilityFn::Kind::table) return UtilityFn::table(load_utility_table(spec.table_path));
  auto [vx, vy] = validation_set(c, task);
  switch (spec.kind) {
    case UtilityFn::Kind::knn:
      return UtilityFn::knn_accuracy(spec.k, std::move(vx), std::move(vy));
    case UtilityFn::Kind::ridge:
      return UtilityFn::ridge_r2(spec.lambda, std::move(vx), std::move(vy));
    case UtilityFn::Kind::logistic:
      return UtilityFn::logistic_accuracy(std::move(vx), std::move(vy));
    default:
      throw ContractError(Errc::bad_parameter, "unreachable utility kind");
  }
}

WeightVector subset_weights(const WeightVector& full, const std::vector<std::size_t>& positions) {
  WeightVector out;
  out.owner = full.owner;
  out.coalitions.reserve(positions.size());
  out.weights.resize(static_cast<Eigen::Index>(positions.size()));
  for (std::size_t i = 0; i < positions.size(); ++i) {
    out.coalitions.push_back(full.coalitions[positions[i]]);
    out.weights[static_cast<Eigen::Index>(i)] = full.weights[static_cast<Eigen::Index>(positions[i])];
  }
  return out;
}

// Shortest decimal that round-trips, for CSV cells.
std::string format_double(double value) {
  for (int precision = 15; precision <= 17; ++precision) {
    std::ostringstream os;
    os.precision(precision);
    os << value;
    if (std::stod(os.str()) == value) return os.str();
  }
  std::ostringstream os;
  os.precision(17);
  os << value;
  return os.str();
}

std::string trim_number(double value) {
  std::ostringstream os;
  os << value;
  return os.str();
}

std::vector<KernelFamily> parse_families(const std::vector<std::string>& names) {
  std::vector<KernelFamily> families;
  for (const std::string& name : names) {
    const KernelFamily f = kernel_family_from_string(name);
    if (std::find(families.begin(), families.end(), f) == families.end()) families.push_back(f);
  }
  if (families.empty()) throw ConfigError(Errc::bad_parameter, "at least one kernel family required");
  return families;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(Errc::bad_parameter, "cannot open for writing: " + path);
  out << text;
  if (!out) throw ConfigError(Errc::bad_parameter, "write failed: " + path);
}

// One convergence row per checkpoint: refit at the winning hyperparameters on
// the first k evaluations and re-assemble every owner's value and band.
void write_curve(const RunConfig& config, const std::vector<Coalition>& order,
                 const std::vector<WeightVector>& base, const std::vector<std::size_t>& a_idx,
                 const std::vector<Coalition>& a_list, const Eigen::VectorXd& u_a,
                 const KernelSpec& spec, double sigma2, DistanceProvider& provider, int n) {
  const std::size_t a_total = a_list.size();
  std::vector<std::size_t> checkpoints;
  const std::size_t points = std::min<std::size_t>(24, a_total);
  for (std::size_t j = 0; j < points; ++j) {
    const std::size_t k =
        points == 1 ? a_total
                    : 1 + (j * (a_total - 1) + (points - 2) / 2) / (points - 1);
    if (checkpoints.empty() || checkpoints.back() != k) checkpoints.push_back(k);
  }

  std::ostringstream csv;
  csv << "evaluations";
  for (int i = 0; i < n; ++i)
    csv << ",owner" << i << "_mean,owner" << i << "_lo,owner" << i << "_hi";
  csv << "\n";

  std::vector<char> in_a(order.size(), 0);
  std::size_t marked = 0;
  for (std::size_t k : checkpoints) {
    for (; marked < k; ++marked) in_a[a_idx[marked]] = 1;
    std::vector<std::size_t> b_pos;
    std::vector<Coalition> b_list;
    for (std::size_t p = 0; p < order.size(); ++p)
      if (!in_a[p]) {
        b_pos.push_back(p);
        b_list.push_back(order[p]);
      }
    const std::span<const Coalition> a_k(a_list.data(), k);
    const Eigen::VectorXd u_k = u_a.head(static_cast<Eigen::Index>(k));
    const GPModel m = fit_fixed(spec, sigma2, a_k, u_k, provider);
    Posterior post;
    if (!b_list.empty()) post = predict(m, b_list, provider, config.threads);
    const std::vector<std::size_t> a_pos(a_idx.begin(), a_idx.begin() + static_cast<std::ptrdiff_t>(k));

    csv << k;
    for (int i = 0; i < n; ++i) {
      const WeightVector wa = subset_weights(base[static_cast<std::size_t>(i)], a_pos);
      const WeightVector wb = subset_weights(base[static_cast<std::size_t>(i)], b_pos);
      const HybridValue hv = semivalue_from_hybrid(wa, u_k, wb, post);
      const double sd = std::sqrt(std::max(hv.variance, 0.0));
      csv << ',' << format_double(hv.mean) << ',' << format_double(hv.mean - sd) << ','
          << format_double(hv.mean + sd);
    }
    csv << "\n";
  }
  write_text_file(config.curve, csv.str());
}

nlohmann::ordered_json build_document(const RunConfig& config, const ProblemData& data,
                                      const ValuationResult& result,
                                      const EvaluationLedger& ledger) {
  nlohmann::ordered_json doc;
  doc["schema"] = "coval-report-v1";
  doc["method"] = result.report.method;
  doc["semivalue"] = to_string(result.report.semivalue);
  doc["owners"] = static_cast<int>(result.report.values.size());
  doc["owner_names"] = data.owner_names;
  if (data.task == Task::classification) doc["class_names"] = data.class_names;
  doc["seed"] = config.seed;

  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  for (const OwnerValue& v : result.report.values) {
    nlohmann::ordered_json entry;
    entry["owner"] = v.owner;
    entry["mean"] = v.mean;
    entry["std_gp"] = v.std_gp;
    if (v.std_mc)
      entry["std_mc"] = *v.std_mc;
    else
      entry["std_mc"] = nullptr;
    entry["bound"] = total_uncertainty(v.std_gp, v.std_mc ? *v.std_mc : 0.0);
    values.push_back(std::move(entry));
  }
  doc["values"] = std::move(values);

  if (result.model) {
    const GPModel& m = *result.model;
    nlohmann::ordered_json kernel;
    kernel["family"] = to_string(m.spec.family);
    kernel["gamma"] = m.spec.gamma;
    kernel["eta"] = m.spec.eta;
    kernel["rho"] = m.spec.sw.rho;
    kernel["order"] = m.spec.sw.p;
    kernel["projections"] = m.spec.sw.projections;
    kernel["sigma2"] = m.noise_var;
    kernel["jitter"] = m.jitter;
    kernel["mean_offset"] = m.mean_offset;
    kernel["log_likelihood"] = m.loglik;
    kernel["train_size"] = m.train_size();
    doc["kernel"] = std::move(kernel);
  } else {
    doc["kernel"] = nullptr;
  }

  nlohmann::ordered_json counts;
  counts["actual"] = result.report.actual_count;
  counts["predicted"] = result.report.predicted_count;
  counts["total"] = result.report.actual_count + result.report.predicted_count;
  if (result.report.method == "permutation") counts["permutations"] = result.permutations;
  doc["counts"] = std::move(counts);

  nlohmann::ordered_json provenance = nlohmann::ordered_json::array();
  for (const LedgerEntry& e : ledger.entries()) {
    nlohmann::ordered_json row;
    row["coalition"] = std::to_string(e.coalition.bits());
    row["members"] = e.coalition.members();
    row["source"] = e.source == Source::actual ? "actual" : "predicted";
    row["utility"] = e.utility;
    provenance.push_back(std::move(row));
  }
  doc["provenance"] = std::move(provenance);
  doc["transport_evaluations"] = result.transport_evaluations;
  doc["config"] = config.to_json();
  return doc;
}

}  // namespace

ProblemData load_problem_data(const RunConfig& c) {
  ProblemData out;
  out.task = task_from_string(c.task);
  if (!c.csv.empty()) {
    TabularData t = load_csv(c.csv, c.target_column, out.task, c.owner_column);
    out.owners = std::move(t.owners);
    out.owner_names = std::move(t.owner_names);
    out.class_names = std::move(t.class_names);
  } else {
    out.owners = generate_owners(c, c.seed);
    for (std::size_t i = 0; i < out.owners.size(); ++i)
      out.owner_names.push_back(std::to_string(i));
    if (out.task == Task::classification)
      for (int k = 0; k < num_classes(out.owners); ++k) out.class_names.push_back(std::to_string(k));
  }
  validate_owners(out.owners, out.task);
  if (out.owners.size() < 2)
    throw ConfigError(Errc::bad_parameter, "valuation needs at least 2 owners");
  return out;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError(Errc::parse_error, "config root must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "csv")
        c.csv = value.get<std::string>();
      else if (key == "generator")
        c.generator = value.get<std::string>();
      else if (key == "owners")
        c.owners = value.get<int>();
      else if (key == "points_per_owner")
        c.points_per_owner = value.get<int>();
      else if (key == "noise")
        c.noise = value.get<double>();
      else if (key == "spread")
        c.spread = value.get<double>();
      else if (key == "classes")
        c.classes = value.get<int>();
      else if (key == "target_column")
        c.target_column = value.get<std::string>();
      else if (key == "owner_column")
        c.owner_column = value.get<std::string>();
      else if (key == "task")
        c.task = value.get<std::string>();
      else if (key == "validation_csv")
        c.validation_csv = value.get<std::string>();
      else if (key == "utility")
        c.utility = value.get<std::string>();
      else if (key == "families")
        c.families = value.get<std::vector<std::string>>();
      else if (key == "projections")
        c.projections = value.get<int>();
      else if (key == "method")
        c.method = value.get<std::string>();
      else if (key == "semivalue")
        c.semivalue = value.get<std::string>();
      else if (key == "budget")
        c.budget = value.get<int>();
      else if (key == "actual_fraction")
        c.actual_fraction = value.get<double>();
      else if (key == "active_fraction")
        c.active_fraction = value.get<double>();
      else if (key == "seed")
        c.seed = value.get<std::uint64_t>();
      else if (key == "threads")
        c.threads = value.get<int>();
      else if (key == "output")
        c.output = value.get<std::string>();
      else if (key == "curve")
        c.curve = value.get<std::string>();
      else
        throw ConfigError(Errc::bad_parameter, "unknown config key: " + key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(Errc::parse_error, "config key '" + key + "': " + e.what());
    }
  }
  return c;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["csv"] = csv;
  j["generator"] = generator;
  j["owners"] = owners;
  j["points_per_owner"] = points_per_owner;
  j["noise"] = noise;
  j["spread"] = spread;
  j["classes"] = classes;
  j["target_column"] = target_column;
  j["owner_column"] = owner_column;
  j["task"] = task;
  j["validation_csv"] = validation_csv;
  j["utility"] = utility;
  j["families"] = families;
  j["projections"] = projections;
  j["method"] = method;
  j["semivalue"] = semivalue;
  j["budget"] = budget;
  j["actual_fraction"] = actual_fraction;
  j["active_fraction"] = active_fraction;
  j["seed"] = seed;
  j["threads"] = threads;
  j["output"] = output;
  j["curve"] = curve;
  return j;
}

void RunConfig::validate() const {
  if (csv.empty() == generator.empty())
    throw ConfigError(Errc::bad_parameter, "exactly one of csv / generator must be set");
  const Task parsed_task = task_from_string(task);
  if (!generator.empty()) {
    if (generator != "moons" && generator != "blobs")
      throw ConfigError(Errc::bad_parameter, "unknown generator '" + generator + "' (moons | blobs)");
    if (owners < 2 || owners > 64)
      throw ConfigError(Errc::bad_parameter, "generator owner count must be in [2, 64]");
    if (points_per_owner < 2)
      throw ConfigError(Errc::bad_parameter, "generator needs at least 2 points per owner");
    if (!(noise >= 0.0) || !std::isfinite(noise))
      throw ConfigError(Errc::bad_parameter, "noise must be a finite non-negative number");
    if (!(spread > 0.0) || !std::isfinite(spread))
      throw ConfigError(Errc::bad_parameter, "spread must be a finite positive number");
    if (classes < 2 || classes > 64)
      throw ConfigError(Errc::bad_parameter, "blobs class count must be in [2, 64]");
    if (parsed_task != Task::classification)
      throw ConfigError(Errc::bad_parameter, "the synthetic generators produce class labels; "
                                             "regression tasks need a CSV source");
  }

  const UtilitySpec u = parse_utility(utility);
  if (u.kind == UtilityFn::Kind::ridge && parsed_task != Task::regression)
    throw ConfigError(Errc::bad_parameter, "the ridge utility requires task=regression");
  if ((u.kind == UtilityFn::Kind::knn || u.kind == UtilityFn::Kind::logistic) &&
      parsed_task != Task::classification)
    throw ConfigError(Errc::bad_parameter, "knn/logistic utilities require task=classification");
  if (u.kind != UtilityFn::Kind::table && !csv.empty() && validation_csv.empty())
    throw ConfigError(Errc::bad_parameter,
                      "model-backed utilities on CSV data need --validation-csv");

  parse_families(families);
  if (projections < 1) throw ConfigError(Errc::bad_parameter, "projections must be >= 1");

  if (method != "exact" && method != "permutation")
    throw ConfigError(Errc::bad_parameter, "method must be exact or permutation");
  const SemivalueKind kind = semivalue_kind_from_string(semivalue);
  if (kind == SemivalueKind::custom)
    throw ConfigError(Errc::bad_parameter,
                      "custom semivalue weights are a library-level feature; use shapley or banzhaf");
  if (kind == SemivalueKind::banzhaf && method == "permutation")
    throw ConfigError(Errc::bad_parameter,
                      "permutation sampling estimates Shapley values only; use method=exact");
  if (budget < 0) throw ConfigError(Errc::bad_parameter, "budget must be >= 0");
  if (budget != 0 && method == "exact")
    throw ConfigError(Errc::bad_parameter, "budget applies to the permutation method");
  if (!(actual_fraction > 0.0) || !(actual_fraction <= 1.0) || !std::isfinite(actual_fraction))
    throw ConfigError(Errc::bad_parameter, "actual_fraction must lie in (0, 1]");
  if (!(active_fraction >= 0.0) || !(active_fraction <= 1.0) || !std::isfinite(active_fraction))
    throw ConfigError(Errc::bad_parameter, "active_fraction must lie in [0, 1]");
  if (threads < 0) throw ConfigError(Errc::bad_parameter, "threads must be >= 0");
}

std::unordered_map<std::uint64_t, double> load_utility_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(Errc::parse_error, "cannot open utility table: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(Errc::parse_error, "utility table " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw ConfigError(Errc::parse_error, "utility table must be a JSON object keyed by coalition bits");
  std::unordered_map<std::uint64_t, double> table;
  for (const auto& [key, value] : j.items()) {
    std::uint64_t bits = 0;
    const char* end = key.data() + key.size();
    auto [ptr, ec] = std::from_chars(key.data(), end, bits);
    if (ec != std::errc() || ptr != end || key.empty())
      throw ConfigError(Errc::parse_error,
                        "utility table key is not a decimal bit pattern: '" + key + "'");
    if (bits == 0)
      throw ConfigError(Errc::bad_parameter,
                        "utility table must not list the empty coalition (its utility is fixed at 0)");
    if (!value.is_number())
      throw ConfigError(Errc::parse_error, "utility table value for '" + key + "' is not a number");
    table[bits] = value.get<double>();
  }
  if (table.empty()) throw ConfigError(Errc::bad_parameter, "utility table is empty");
  return table;
}

ValuationResult run_valuation(const RunConfig& config) {
  config.validate();
  const ProblemData data = load_problem_data(config);
  const int n = static_cast<int>(data.owners.size());
  const bool exact = config.method == "exact";
  if (exact && n > 16)
    throw ConfigError(Errc::too_many_owners,
                      "exact enumeration is capped at 16 owners; use method=permutation");

  const SemivalueKind sv_kind = semivalue_kind_from_string(config.semivalue);
  const SemivalueWeights sv = sv_kind == SemivalueKind::banzhaf ? SemivalueWeights::banzhaf(n)
                                                                : SemivalueWeights::shapley(n);
  const UtilityFn fn = build_utility(config, data.task);

  // The coalition set C: the full power set (minus the empty set) for the
  // exact method, permutation prefixes otherwise.
  std::vector<Coalition> order;
  std::vector<std::vector<int>> perms;
  if (exact) {
    order.reserve((std::size_t{1} << n) - 1);
    for (std::uint64_t bits = 1; bits < (std::uint64_t{1} << n); ++bits) order.emplace_back(bits);
  } else {
    const std::size_t target =
        config.budget > 0 ? static_cast<std::size_t>(config.budget) : static_cast<std::size_t>(8 * n);
    PermutationSample sample = sample_permutation_coalitions(target, n, config.seed);
    order = std::move(sample.coalitions);
    perms = std::move(sample.permutations);
  }
  const std::size_t total = order.size();

  std::unordered_map<Coalition, std::size_t, CoalitionHash> position;
  position.reserve(total);
  for (std::size_t i = 0; i < total; ++i) position.emplace(order[i], i);

  // Partition: the grand coalition is always evaluated; the rest of A is a
  // uniform draw, optionally grown greedily below.
  const Coalition grand = Coalition::full(n);
  const std::size_t a_target = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.actual_fraction * static_cast<double>(total))),
      1, total);
  std::vector<std::size_t> rest;
  rest.reserve(total - 1);
  for (std::size_t i = 0; i < total; ++i)
    if (order[i] != grand) rest.push_back(i);
  Rng split_rng(derive_seed(config.seed, kSplitTag));
  for (std::size_t k = 0; k + 1 < a_target && k + 1 < rest.size(); ++k)
    std::swap(rest[k], rest[k + split_rng.uniform_int(rest.size() - k)]);

  std::vector<std::size_t> a_idx;
  a_idx.reserve(a_target);
  a_idx.push_back(position.at(grand));
  a_idx.insert(a_idx.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(a_target - 1));
  std::vector<std::size_t> pool_idx(rest.begin() + static_cast<std::ptrdiff_t>(a_target - 1),
                                    rest.end());
  std::sort(pool_idx.begin(), pool_idx.end());

  const std::size_t active_budget = std::clamp<std::size_t>(
      static_cast<std::size_t>(
          std::llround(config.active_fraction * static_cast<double>(pool_idx.size()))),
      0, pool_idx.size());

  const bool needs_gp =
      active_budget > 0 || total > a_target + active_budget || !config.curve.empty();
  if (needs_gp) {
    if (a_target + active_budget > kMaxActual)
      throw ConfigError(Errc::bad_parameter,
                        "more than " + std::to_string(kMaxActual) +
                            " evaluations feed the GP; lower the budget or fractions");
    if (total - a_target - active_budget > kMaxPredicted)
      throw ConfigError(Errc::bad_parameter,
                        "more than " + std::to_string(kMaxPredicted) +
                            " coalitions to predict; raise actual_fraction or lower the budget");
    if (a_target < 2)
      throw ConfigError(Errc::bad_parameter,
                        "the GP needs at least 2 actual evaluations; raise actual_fraction");
  }

  // Evaluate the initial A (parallel; the utility is a pure function).
  EvaluationLedger ledger;
  std::vector<Coalition> a_list;
  a_list.reserve(a_target + active_budget);
  for (std::size_t id : a_idx) a_list.push_back(order[id]);
  Eigen::VectorXd u_a(static_cast<Eigen::Index>(a_list.size()));
  parallel_for(a_list.size(), config.threads, [&](std::size_t i) {
    u_a[static_cast<Eigen::Index>(i)] = fn(a_list[i], data.owners);
  });
  if (!u_a.allFinite())
    throw NumericError(Errc::not_finite, "a utility evaluation produced a non-finite value");
  for (std::size_t i = 0; i < a_list.size(); ++i)
    ledger.record(a_list[i], u_a[static_cast<Eigen::Index>(i)], Source::actual);

  // Per-owner estimator weights over all of C; every later split is a subset
  // of this one vector, so the exact and permutation paths share the same
  // assembly and variance plumbing.
  std::vector<WeightVector> base;
  base.reserve(static_cast<std::size_t>(n));
  if (exact) {
    for (int i = 0; i < n; ++i) base.push_back(weight_vector(sv, i, order));
  } else {
    base = permutation_weight_vectors(perms, order, n);
  }

  DistanceProvider provider(data.owners, data.task, config.projections, config.seed);
  HyperGrid grid = HyperGrid::defaults();
  grid.families = parse_families(config.families);

  // Active growth of A: warm fit on the random part, then greedy picks.
  if (active_budget > 0) {
    const GPModel warm = fit(grid, a_list, u_a, provider, config.threads);
    std::vector<Coalition> pool;
    pool.reserve(pool_idx.size());
    for (std::size_t id : pool_idx) pool.push_back(order[id]);
    std::vector<WeightVector> pool_weights;
    pool_weights.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      pool_weights.push_back(subset_weights(base[static_cast<std::size_t>(i)], pool_idx));
    const WeightVector aggregated = aggregate_weight(pool_weights);
    const SelectionResult selection = greedy_select(warm, pool, aggregated.weights,
                                                    static_cast<int>(active_budget), provider,
                                                    config.threads);
    const std::size_t before = a_list.size();
    for (Coalition c : selection.chosen) a_list.push_back(c);
    u_a.conservativeResize(static_cast<Eigen::Index>(a_list.size()));
    parallel_for(selection.chosen.size(), config.threads, [&](std::size_t i) {
      u_a[static_cast<Eigen::Index>(before + i)] = fn(selection.chosen[i], data.owners);
    });
    if (!u_a.allFinite())
      throw NumericError(Errc::not_finite, "a utility evaluation produced a non-finite value");
    std::unordered_set<std::uint64_t> chosen_bits;
    for (std::size_t i = 0; i < selection.chosen.size(); ++i) {
      ledger.record(selection.chosen[i], u_a[static_cast<Eigen::Index>(before + i)],
                    Source::actual);
      a_idx.push_back(position.at(selection.chosen[i]));
      chosen_bits.insert(selection.chosen[i].bits());
    }
    std::erase_if(pool_idx,
                  [&](std::size_t id) { return chosen_bits.contains(order[id].bits()); });
  }

  std::vector<Coalition> b_list;
  b_list.reserve(pool_idx.size());
  for (std::size_t id : pool_idx) b_list.push_back(order[id]);

  std::optional<GPModel> model;
  Posterior posterior;
  if (!b_list.empty()) {
    model = fit(grid, a_list, u_a, provider, config.threads);
    posterior = predict(*model, b_list, provider, config.threads);
    for (std::size_t i = 0; i < b_list.size(); ++i)
      ledger.record(b_list[i], posterior.mean[static_cast<Eigen::Index>(i)], Source::predicted);
  }

  Eigen::VectorXd std_mc;
  if (!exact) std_mc = permutation_marginal_std(perms, ledger, n);

  ValuationResult result;
  result.report.method = config.method;
  result.report.semivalue = sv_kind;
  result.report.actual_count = a_list.size();
  result.report.predicted_count = b_list.size();
  for (int i = 0; i < n; ++i) {
    const WeightVector wa = subset_weights(base[static_cast<std::size_t>(i)], a_idx);
    const WeightVector wb = subset_weights(base[static_cast<std::size_t>(i)], pool_idx);
    const HybridValue hv = semivalue_from_hybrid(wa, u_a, wb, posterior);
    OwnerValue value;
    value.owner = i;
    value.mean = hv.mean;
    value.std_gp = std::sqrt(std::max(hv.variance, 0.0));
    if (!exact) value.std_mc = std_mc[i];
    value.std_bound = value.std_gp + (value.std_mc ? *value.std_mc : 0.0);
    if (!std::isfinite(value.mean) || !std::isfinite(value.std_gp) ||
        (value.std_mc && !std::isfinite(*value.std_mc)))
      throw NumericError(Errc::not_finite, "assembled value is not finite");
    result.report.values.push_back(value);
  }

  result.actual = a_list;
  result.predicted = b_list;
  result.actual_utilities = u_a;
  result.model = std::move(model);
  result.posterior = std::move(posterior);
  result.transport_evaluations = provider.transport_evaluations();
  result.permutations = perms.size();
  result.document = build_document(config, data, result, ledger);

  if (!config.output.empty()) write_text_file(config.output, result.document.dump(2) + "\n");
  if (!config.curve.empty()) {
    KernelSpec curve_spec;
    double curve_sigma2 = 0.0;
    if (result.model) {
      curve_spec = result.model->spec;
      curve_sigma2 = result.model->noise_var;
    } else {
      // Nothing was predicted (f = 1), so pick hyperparameters once here.
      const GPModel m = fit(grid, a_list, u_a, provider, config.threads);
      curve_spec = m.spec;
      curve_sigma2 = m.noise_var;
    }
    write_curve(config, order, base, a_idx, a_list, u_a, curve_spec, curve_sigma2, provider, n);
  }
  return result;
}

AgreementMetrics compare_reports(const nlohmann::json& estimate, const nlohmann::json& reference) {
  const auto extract = [](const nlohmann::json& doc) {
    std::map<int, double> means;
    try {
      if (!doc.is_object() || !doc.contains("values") || !doc.at("values").is_array())
        throw ConfigError(Errc::parse_error, "report has no values array");
      for (const auto& entry : doc.at("values")) {
        const int owner = entry.at("owner").get<int>();
        const double mean = entry.at("mean").get<double>();
        if (!means.emplace(owner, mean).second)
          throw ConfigError(Errc::parse_error,
                            "report lists owner " + std::to_string(owner) + " twice");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(Errc::parse_error, std::string("malformed report: ") + e.what());
    }
    if (means.empty()) throw ConfigError(Errc::parse_error, "report has no owner values");
    return means;
  };
  const std::map<int, double> est = extract(estimate);
  const std::map<int, double> ref = extract(reference);
  if (est.size() != ref.size() ||
      !std::equal(est.begin(), est.end(), ref.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw ConfigError(Errc::owner_mismatch, "reports cover different owner sets");

  Eigen::VectorXd ve(static_cast<Eigen::Index>(est.size()));
  Eigen::VectorXd vr(static_cast<Eigen::Index>(ref.size()));
  Eigen::Index i = 0;
  for (const auto& [owner, mean] : est) ve[i++] = mean;
  i = 0;
  for (const auto& [owner, mean] : ref) vr[i++] = mean;
  return {mean_squared_error(vr, ve), pearson_correlation(vr, ve), kendall_tau(vr, ve)};
}

std::vector<MethodComparison> compare_methods(std::span<const RunConfig> configs,
                                              const Eigen::VectorXd& reference) {
  struct Group {
    std::string label;
    std::vector<AgreementMetrics> runs;
  };
  std::vector<Group> groups;
  std::map<std::string, std::size_t> group_of;

  for (const RunConfig& config : configs) {
    const ValuationResult run = run_valuation(config);
    if (static_cast<Eigen::Index>(run.report.values.size()) != reference.size())
      throw ConfigError(Errc::owner_mismatch,
                        "reference covers " + std::to_string(reference.size()) + " owners, run has " +
                            std::to_string(run.report.values.size()));
    Eigen::VectorXd estimate(reference.size());
    for (const OwnerValue& v : run.report.values) estimate[v.owner] = v.mean;

    nlohmann::ordered_json key_json = config.to_json();
    key_json.erase("seed");
    key_json.erase("output");
    key_json.erase("curve");
    const std::string key = key_json.dump();

    auto [it, fresh] = group_of.emplace(key, groups.size());
    if (fresh) {
      std::string families;
      for (const std::string& f : config.families) {
        if (!families.empty()) families += '+';
        families += f;
      }
      groups.push_back(Group{config.method + "/" + config.utility + "/" + families +
                                 "/f=" + trim_number(config.actual_fraction) +
                                 "/g=" + trim_number(config.active_fraction),
                             {}});
    }
    groups[it->second].runs.push_back({mean_squared_error(reference, estimate),
                                       pearson_correlation(reference, estimate),
                                       kendall_tau(reference, estimate)});
  }

  const auto mean_std = [](const std::vector<AgreementMetrics>& runs, auto field) {
    double mean = 0.0;
    for (const AgreementMetrics& m : runs) mean += field(m);
    mean /= static_cast<double>(runs.size());
    double var = 0.0;
    for (const AgreementMetrics& m : runs) var += (field(m) - mean) * (field(m) - mean);
    const double sd = runs.size() > 1 ? std::sqrt(var / static_cast<double>(runs.size() - 1)) : 0.0;
    return std::pair<double, double>{mean, sd};
  };

  std::vector<MethodComparison> out;
  out.reserve(groups.size());
  for (const Group& g : groups) {
    MethodComparison row;
    row.label = g.label;
    row.runs = static_cast<int>(g.runs.size());
    std::tie(row.mse_mean, row.mse_std) =
        mean_std(g.runs, [](const AgreementMetrics& m) { return m.mse; });
    std::tie(row.pearson_mean, row.pearson_std) =
        mean_std(g.runs, [](const AgreementMetrics& m) { return m.pearson; });
    std::tie(row.tau_mean, row.tau_std) =
        mean_std(g.runs, [](const AgreementMetrics& m) { return m.tau; });
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace coval

#include "coval/semivalue.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace coval {

std::string to_string(SemivalueKind k) {
  switch (k) {
    case SemivalueKind::shapley: return "shapley";
    case SemivalueKind::banzhaf: return "banzhaf";
    case SemivalueKind::custom: return "custom";
  }
  throw ContractError(Errc::bad_parameter, "unhandled semivalue kind");
}

SemivalueKind semivalue_kind_from_string(const std::string& s) {
  if (s == "shapley") return SemivalueKind::shapley;
  if (s == "banzhaf") return SemivalueKind::banzhaf;
  if (s == "custom") return SemivalueKind::custom;
  throw ConfigError(Errc::bad_parameter, "unknown semivalue '" + s + "'");
}

namespace {

void check_owner_count(int n) {
  if (n < 1 || n > 64)
    throw ConfigError(Errc::too_many_owners, "owner count must be in [1, 64], got " + std::to_string(n));
}

}  // namespace

SemivalueWeights SemivalueWeights::shapley(int n) {
  check_owner_count(n);
  std::vector<double> omega(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c)
    omega[static_cast<std::size_t>(c)] = 1.0 / (n * binomial(n - 1, c));
  return SemivalueWeights(SemivalueKind::shapley, n, std::move(omega));
}

SemivalueWeights SemivalueWeights::banzhaf(int n) {
  check_owner_count(n);
  std::vector<double> omega(static_cast<std::size_t>(n), std::pow(2.0, -(n - 1)));
  return SemivalueWeights(SemivalueKind::banzhaf, n, std::move(omega));
}

SemivalueWeights SemivalueWeights::custom(int n, std::vector<double> omega) {
  check_owner_count(n);
  if (omega.size() != static_cast<std::size_t>(n))
    throw ConfigError(Errc::bad_parameter, "custom weights need one omega per coalition size 0..n-1");
  double norm = 0.0;
  for (int c = 0; c < n; ++c) {
    if (omega[static_cast<std::size_t>(c)] < 0.0)
      throw ConfigError(Errc::bad_parameter, "semivalue weights must be non-negative");
    norm += omega[static_cast<std::size_t>(c)] * binomial(n - 1, c);
  }
  if (std::abs(norm - 1.0) > 1e-12)
    throw ConfigError(Errc::bad_parameter,
                      "weights violate the normalization sum omega_c * C(n-1,c) = 1 (got " +
                          std::to_string(norm) + ")");
  return SemivalueWeights(SemivalueKind::custom, n, std::move(omega));
}

double SemivalueWeights::omega(int c) const {
  if (c < 0 || c >= n_)
    throw ContractError(Errc::bad_parameter, "omega index out of range: " + std::to_string(c));
  return omega_[static_cast<std::size_t>(c)];
}

WeightVector weight_vector(const SemivalueWeights& sv, int owner,
                           std::span<const Coalition> coalitions) {
  if (owner < 0 || owner >= sv.owners())
    throw ConfigError(Errc::missing_owner, "owner index out of range: " + std::to_string(owner));
  std::unordered_set<std::uint64_t> seen;
  WeightVector out;
  out.owner = owner;
  out.coalitions.assign(coalitions.begin(), coalitions.end());
  out.weights.resize(static_cast<Eigen::Index>(coalitions.size()));
  for (std::size_t j = 0; j < coalitions.size(); ++j) {
    const Coalition c = coalitions[j];
    if (!seen.insert(c.bits()).second)
      throw ConfigError(Errc::duplicate_coalition,
                        "coalition " + c.to_string() + " appears twice in the weight vector");
    if (sv.owners() < 64 && (c.bits() >> sv.owners()) != 0)
      throw ConfigError(Errc::too_many_owners,
                        "coalition " + c.to_string() + " exceeds the owner universe");
    out.weights[static_cast<Eigen::Index>(j)] =
        c.contains(owner) ? sv.omega(c.size() - 1) : -sv.omega(c.size());
  }
  return out;
}

double EvaluationLedger::record(Coalition c, double utility, Source source) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(c);
  if (it == index_.end()) {
    index_.emplace(c, entries_.size());
    entries_.push_back({c, utility, source});
    return utility;
  }
  LedgerEntry& entry = entries_[it->second];
  if (entry.source == Source::predicted && source == Source::actual) {
    entry.utility = utility;  // an actual evaluation supersedes a prediction
    entry.source = Source::actual;
  }
  return entry.utility;
}

std::optional<LedgerEntry> EvaluationLedger::find(Coalition c) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(c);
  if (it == index_.end()) return std::nullopt;
  return entries_[it->second];
}

bool EvaluationLedger::contains(Coalition c) const {
  std::lock_guard lock(mutex_);
  return index_.count(c) != 0;
}

std::size_t EvaluationLedger::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t EvaluationLedger::count(Source source) const {
  std::lock_guard lock(mutex_);
  std::size_t c = 0;
  for (const auto& e : entries_)
    if (e.source == source) ++c;
  return c;
}

std::vector<LedgerEntry> EvaluationLedger::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

Eigen::VectorXd exact_shapley_bruteforce(const std::function<double(Coalition)>& u, int n) {
  check_owner_count(n);
  if (n > 14)
    throw ConfigError(Errc::too_many_owners,
                      "exhaustive enumeration is guarded to n <= 14, got " + std::to_string(n));
  const std::uint64_t full = Coalition::full(n).bits();
  std::vector<double> util(static_cast<std::size_t>(full) + 1, 0.0);  // util[0] = u(empty) = 0
  for (std::uint64_t bits = 1; bits <= full; ++bits) util[bits] = u(Coalition(bits));

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double acc = 0.0;
    // enumerate the subsets of N \ {i} by iterating all masks without bit i
    const std::uint64_t others = full & ~bit;
    std::uint64_t sub = 0;
    while (true) {
      const int c = std::popcount(sub);
      const double weight = 1.0 / (n * binomial(n - 1, c));
      acc += weight * (util[sub | bit] - util[sub]);
      if (sub == others) break;
      sub = (sub - others) & others;  // next subset of `others`
    }
    phi[i] = acc;
  }
  return phi;
}

HybridValue semivalue_from_hybrid(const WeightVector& w_actual, const Eigen::VectorXd& u_actual,
                                  const WeightVector& w_predicted, const Posterior& posterior) {
  if (static_cast<Eigen::Index>(w_actual.coalitions.size()) != u_actual.size())
    throw ContractError(Errc::alignment_error, "actual weights and utilities differ in length");
  if (w_predicted.coalitions.size() != posterior.coalitions.size())
    throw ContractError(Errc::alignment_error, "predicted weights and posterior differ in length");
  for (std::size_t j = 0; j < w_predicted.coalitions.size(); ++j)
    if (w_predicted.coalitions[j] != posterior.coalitions[j])
      throw ContractError(Errc::alignment_error,
                          "posterior coalition order does not match the weight vector at index " +
                              std::to_string(j));

  HybridValue out;
  out.mean = w_actual.weights.dot(u_actual);
  if (posterior.mean.size() > 0) out.mean += w_predicted.weights.dot(posterior.mean);
  if (posterior.cov.size() > 0) {
    out.variance = w_predicted.weights.dot(posterior.cov * w_predicted.weights);
    if (out.variance < 0.0) {
      if (out.variance < -1e-10)
        throw NumericError(Errc::negative_variance,
                           "semivalue variance " + std::to_string(out.variance) + " below clamp");
      out.variance = 0.0;
    }
  }
  return out;
}

PermutationSample sample_permutation_coalitions(std::size_t target, int n, std::uint64_t seed) {
  check_owner_count(n);
  if (target < static_cast<std::size_t>(n))
    throw ConfigError(Errc::bad_parameter,
                      "coalition budget must be at least the owner count (one permutation)");
  // At most 2^n - 1 distinct prefixes exist; cap the target so small owner
  // counts terminate.
  if (n < 63) {
    const std::uint64_t limit = (std::uint64_t{1} << n) - 1;
    if (target > limit) target = limit;
  }

  PermutationSample out;
  std::unordered_set<std::uint64_t> seen;
  Rng rng(derive_seed(seed, /*tag=*/0x5045524dull));  // "PERM"
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  while (seen.size() < target) {
    rng.shuffle(perm);
    std::uint64_t mask = 0;
    for (int o : perm) {
      mask |= std::uint64_t{1} << o;
      if (seen.insert(mask).second) out.coalitions.push_back(Coalition(mask));
    }
    out.permutations.push_back(perm);
  }
  return out;
}

namespace {

// Resolves every prefix utility of one permutation through the ledger.
std::vector<double> prefix_utilities(const std::vector<int>& perm, const EvaluationLedger& ledger,
                                     int n) {
  if (static_cast<int>(perm.size()) != n)
    throw ContractError(Errc::bad_parameter, "permutation length does not match owner count");
  std::vector<double> u(perm.size());
  std::uint64_t mask = 0;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    mask |= std::uint64_t{1} << perm[k];
    const auto entry = ledger.find(Coalition(mask));
    if (!entry)
      throw ContractError(Errc::missing_prefix,
                          "no utility for prefix coalition " + Coalition(mask).to_string());
    u[k] = entry->utility;
  }
  return u;
}

}  // namespace

Eigen::VectorXd shapley_permutation_estimate(const std::vector<std::vector<int>>& permutations,
                                             const EvaluationLedger& ledger, int n) {
  check_owner_count(n);
  if (permutations.empty())
    throw ConfigError(Errc::bad_parameter, "permutation estimate needs at least one permutation");
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  for (const auto& perm : permutations) {
    const std::vector<double> u = prefix_utilities(perm, ledger, n);
    double prev = 0.0;  // u(empty) = 0
    for (std::size_t k = 0; k < perm.size(); ++k) {
      phi[perm[k]] += u[k] - prev;
      prev = u[k];
    }
  }
  return phi / static_cast<double>(permutations.size());
}

Eigen::VectorXd permutation_marginal_std(const std::vector<std::vector<int>>& permutations,
                                         const EvaluationLedger& ledger, int n) {
  check_owner_count(n);
  const std::size_t r = permutations.size();
  if (r < 2) return Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd marginals(static_cast<Eigen::Index>(r), n);
  for (std::size_t pi = 0; pi < r; ++pi) {
    const auto& perm = permutations[pi];
    const std::vector<double> u = prefix_utilities(perm, ledger, n);
    double prev = 0.0;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      marginals(static_cast<Eigen::Index>(pi), perm[k]) = u[k] - prev;
      prev = u[k];
    }
  }
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd col = marginals.col(i);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(r - 1);
    out[i] = std::sqrt(var) / std::sqrt(static_cast<double>(r));
  }
  return out;
}

std::vector<WeightVector> permutation_weight_vectors(
    const std::vector<std::vector<int>>& permutations, std::span<const Coalition> order, int n) {
  check_owner_count(n);
  if (permutations.empty())
    throw ConfigError(Errc::bad_parameter, "no permutations given");
  std::unordered_map<std::uint64_t, std::size_t> slot;
  for (std::size_t j = 0; j < order.size(); ++j)
    if (!slot.emplace(order[j].bits(), j).second)
      throw ConfigError(Errc::duplicate_coalition,
                        "coalition " + order[j].to_string() + " appears twice in the order");
  const double inv_r = 1.0 / static_cast<double>(permutations.size());

  std::vector<WeightVector> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)].owner = i;
    out[static_cast<std::size_t>(i)].coalitions.assign(order.begin(), order.end());
    out[static_cast<std::size_t>(i)].weights =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(order.size()));
  }
  for (const auto& perm : permutations) {
    if (static_cast<int>(perm.size()) != n)
      throw ContractError(Errc::bad_parameter, "permutation length does not match owner count");
    std::uint64_t mask = 0;
    std::size_t prev_slot = static_cast<std::size_t>(-1);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      mask |= std::uint64_t{1} << perm[k];
      auto it = slot.find(mask);
      if (it == slot.end())
        throw ContractError(Errc::missing_prefix,
                            "prefix " + Coalition(mask).to_string() + " missing from the order");
      auto& w = out[static_cast<std::size_t>(perm[k])].weights;
      w[static_cast<Eigen::Index>(it->second)] += inv_r;
      if (prev_slot != static_cast<std::size_t>(-1))
        w[static_cast<Eigen::Index>(prev_slot)] -= inv_r;
      prev_slot = it->second;
    }
  }
  return out;
}

double total_uncertainty(double sigma_gp, double sigma_mc) {
  if (!std::isfinite(sigma_gp) || !std::isfinite(sigma_mc))
    throw ContractError(Errc::not_finite, "uncertainty inputs must be finite");
  const double s = sigma_gp + sigma_mc;
  return s * s;
}

}  // namespace coval

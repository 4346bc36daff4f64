#pragma once

#include <Eigen/Core>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "coval/common.hpp"
#include "coval/gp.hpp"

namespace coval {

enum class SemivalueKind { shapley, banzhaf, custom };

std::string to_string(SemivalueKind k);
SemivalueKind semivalue_kind_from_string(const std::string& s);

// Per-size marginal weights omega_c (c = |C| of the coalition an owner joins,
// 0..n-1), normalized so that sum_c omega_c * C(n-1, c) = 1.
class SemivalueWeights {
public:
  static SemivalueWeights shapley(int n);   // omega_c = 1 / (n * C(n-1, c))
  static SemivalueWeights banzhaf(int n);   // omega_c = 1 / 2^{n-1}
  // Arbitrary non-negative weights; the normalization identity is enforced
  // within 1e-12.
  static SemivalueWeights custom(int n, std::vector<double> omega);

  SemivalueKind kind() const { return kind_; }
  int owners() const { return n_; }
  double omega(int c) const;

private:
  SemivalueWeights(SemivalueKind kind, int n, std::vector<double> omega)
      : kind_(kind), n_(n), omega_(std::move(omega)) {}
  SemivalueKind kind_;
  int n_;
  std::vector<double> omega_;
};

// The signed per-coalition weights that turn a semivalue into a single
// weighted sum over coalition utilities: +omega_{|C|-1} when the owner is in
// C, -omega_{|C|} when it is not (the empty coalition, if listed, gets
// -omega_0 — consistent with the second case).
struct WeightVector {
  int owner = -1;  // -1 marks an aggregated (multi-owner) vector
  std::vector<Coalition> coalitions;
  Eigen::VectorXd weights;
};

WeightVector weight_vector(const SemivalueWeights& sv, int owner,
                           std::span<const Coalition> coalitions);

// ---------------------------------------------------------------------------
// EvaluationLedger: which coalitions were actually evaluated vs predicted,
// with their utilities.  Insert-if-absent under a mutex; an actual entry is
// never downgraded by a predicted one.
// ---------------------------------------------------------------------------

enum class Source { actual, predicted };

struct LedgerEntry {
  Coalition coalition;
  double utility = 0.0;
  Source source = Source::actual;
};

class EvaluationLedger {
public:
  EvaluationLedger() = default;
  EvaluationLedger(const EvaluationLedger&) = delete;
  EvaluationLedger& operator=(const EvaluationLedger&) = delete;

  // Returns the stored utility: the given one if this call inserted (or
  // upgraded predicted -> actual), the previously stored one otherwise.
  double record(Coalition c, double utility, Source source);
  std::optional<LedgerEntry> find(Coalition c) const;
  bool contains(Coalition c) const;

  std::size_t size() const;
  std::size_t count(Source source) const;
  std::vector<LedgerEntry> entries() const;  // insertion order

private:
  mutable std::mutex mutex_;
  std::unordered_map<Coalition, std::size_t, CoalitionHash> index_;
  std::vector<LedgerEntry> entries_;
};

// ---------------------------------------------------------------------------
// Exact and hybrid assembly.
// ---------------------------------------------------------------------------

// Direct marginal-contribution sum over the full power set, u(empty) = 0.
// The oracle is called once per non-empty coalition.  Guarded to n <= 14.
Eigen::VectorXd exact_shapley_bruteforce(const std::function<double(Coalition)>& u, int n);

struct HybridValue {
  double mean = 0.0;
  double variance = 0.0;  // from the predicted block only
};

// mean = w_A' u_A + w_B' E[u_B | u_A];  variance = w_B' V w_B.  The posterior
// must list exactly w_B's coalitions in the same order.
HybridValue semivalue_from_hybrid(const WeightVector& w_actual, const Eigen::VectorXd& u_actual,
                                  const WeightVector& w_predicted, const Posterior& posterior);

// ---------------------------------------------------------------------------
// Permutation sampling (Monte Carlo Shapley).
// ---------------------------------------------------------------------------

struct PermutationSample {
  std::vector<Coalition> coalitions;             // distinct prefixes, first-seen order
  std::vector<std::vector<int>> permutations;    // each a full order of 0..n-1
};

// Samples uniform permutations until at least `target` distinct prefix
// coalitions have accumulated (capped at 2^n - 1, the number that exists);
// the last permutation is kept whole even if it overshoots.
PermutationSample sample_permutation_coalitions(std::size_t target, int n, std::uint64_t seed);

// phi'_i = (1/|R|) sum_r [u(prefix incl. i) - u(prefix before i)], utilities
// resolved through the ledger (actual or predicted alike), u(empty) = 0.
Eigen::VectorXd shapley_permutation_estimate(const std::vector<std::vector<int>>& permutations,
                                             const EvaluationLedger& ledger, int n);

// Per-owner sample standard deviation of the per-permutation marginal
// contributions, divided by sqrt(|R|): the Monte Carlo half of the
// uncertainty budget.  Zero when |R| < 2.
Eigen::VectorXd permutation_marginal_std(const std::vector<std::vector<int>>& permutations,
                                         const EvaluationLedger& ledger, int n);

// The estimator weights induced by the permutation sum, aligned with `order`
// (every prefix of every permutation must appear there): +1/|R| on each
// prefix ending at the owner, -1/|R| on the preceding prefix.  These make
// the permutation estimate a weighted sum, so GP variance propagates through
// the same quadratic form as the exact path.
std::vector<WeightVector> permutation_weight_vectors(
    const std::vector<std::vector<int>>& permutations, std::span<const Coalition> order, int n);

// The variance bound (sigma_gp + sigma_mc)^2 = s_gp^2 + s_mc^2 + 2 s_gp s_mc.
double total_uncertainty(double sigma_gp, double sigma_mc);

// ---------------------------------------------------------------------------
// Report structure shared by the exact and permutation drivers.
// ---------------------------------------------------------------------------

struct OwnerValue {
  int owner = 0;
  double mean = 0.0;
  double std_gp = 0.0;
  std::optional<double> std_mc;  // present for permutation runs
  double std_bound = 0.0;        // sigma_gp + sigma_mc (== sigma_gp when exact)
};

struct SemivalueReport {
  std::string method;  // "exact" | "permutation"
  SemivalueKind semivalue = SemivalueKind::shapley;
  std::vector<OwnerValue> values;  // ascending owner
  std::size_t actual_count = 0;
  std::size_t predicted_count = 0;
};

}  // namespace coval

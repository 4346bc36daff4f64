#pragma once

#include <Eigen/Core>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "coval/dataset.hpp"
#include "coval/transport.hpp"

namespace coval {

// Exponential kernel families over coalitions.
//   ssw_sq_exp:  exp(-gamma * SSW_2^{2 rho})   (the default; rho = 1 gives plain SSW_2^2)
//   ssw_l1_exp:  exp(-gamma * SSW_1^{rho})
//   binary_rbf:  exp(-gamma * ||1_A - 1_B||^2) on 0/1 owner-indicator vectors
//   otdd_exp:    exp(-gamma * OTDD^{2 rho}); not guaranteed PSD, kept as baseline
enum class KernelFamily { ssw_sq_exp, ssw_l1_exp, binary_rbf, otdd_exp };

std::string to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string& s);

struct KernelSpec {
  KernelFamily family = KernelFamily::ssw_sq_exp;
  double gamma = 1.0;
  SWParams sw;       // rho, projection count and seed; the order p is implied by the family
  double eta = 0.5;  // supervised mix, used by the ssw families

  void validate() const;
};

// Identifies which raw transport distance a kernel family consumes.
enum class DistanceKind { ssw_p1, ssw_p2, raw_p1, raw_p2, indicator, otdd_p1, otdd_p2 };

// ---------------------------------------------------------------------------
// DistanceProvider: owns the per-problem transport state — shared projection
// sets, per-eta transformed caches, the label embedding, and a memo of raw
// distances keyed by (kind, eta, pair).  Kernel values are cheap functions
// of these raw distances, so gamma/rho sweeps never re-pay transport cost.
//
// Suggested use: prepare() every coalition that will ever be touched, then
// compute freely (also from multiple threads).  prepare() is not
// thread-safe; distance reads and memo writes are.
// ---------------------------------------------------------------------------

class DistanceProvider {
public:
  DistanceProvider(std::vector<OwnerDataset> owners, Task task, int projections,
                   std::uint64_t seed);

  int owner_count() const { return static_cast<int>(owners_.size()); }
  Task task() const { return task_; }
  int projections() const { return projections_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<OwnerDataset>& owners() const { return owners_; }

  // Label embedding of the pooled classes (classification problems only;
  // built in the constructor so every distance sees the same embedding).
  const LabelEmbedding& embedding() const;

  // Projects the coalitions into the caches the given kinds/etas will read.
  // Idempotent; call before any parallel distance work.
  void prepare(std::span<const Coalition> coalitions, DistanceKind kind, double eta = 1.0);

  // Raw (un-exponentiated, un-powered) distance for a kind.  ssw kinds use
  // the supervised transform at `eta`; kernels consume the root_of_mean
  // aggregation (see SliceAggregation), the `aggregation` parameter exists
  // for the distance CLI which exposes both conventions.
  double distance(DistanceKind kind, Coalition a, Coalition b, double eta = 1.0,
                  SliceAggregation aggregation = SliceAggregation::root_of_mean);

  // Number of transport computations actually performed (memo misses on
  // non-identical pairs); lets tests pin down deduplication.
  std::size_t transport_evaluations() const;

private:
  std::vector<OwnerDataset> owners_;
  Task task_;
  int projections_;
  std::uint64_t seed_;

  bool embedding_built_ = false;
  LabelEmbedding embedding_;

  std::shared_ptr<const ProjectionSet> raw_dirs_;         // dim m
  std::shared_ptr<const ProjectionSet> supervised_dirs_;  // dim m + target_dim
  ProjectionCache raw_cache_;
  std::map<std::uint64_t, ProjectionCache> eta_caches_;  // key: bit pattern of eta

  bool class_sw1_built_ = false;
  Eigen::MatrixXd class_sw1_;
  std::map<std::uint64_t, AggregatedDataset> aggregates_;  // for the LP baseline

  mutable std::mutex memo_mutex_;
  struct MemoKey {
    DistanceKind kind;
    SliceAggregation aggregation;
    std::uint64_t eta_bits;
    std::uint64_t a, b;
    auto operator<=>(const MemoKey&) const = default;
  };
  std::map<MemoKey, double> memo_;
  std::size_t evaluations_ = 0;

  int target_dim() const;
  const AggregatedDataset& aggregate_of(Coalition c);
  double compute(DistanceKind kind, Coalition a, Coalition b, double eta,
                 SliceAggregation aggregation);
};

// Which raw distance a family reads, and the exponent applied to it before
// the exponential: k = exp(-gamma * raw^e).
DistanceKind distance_kind_of(KernelFamily f);
double distance_exponent(KernelFamily f, double rho);
double apply_kernel(double raw_distance, KernelFamily f, double gamma, double rho);

struct KernelMatrix {
  std::vector<Coalition> rows;
  std::vector<Coalition> cols;
  Eigen::MatrixXd values;
};

// exp(-gamma * d) with d derived from the family's raw distance and rho.
double kernel_value(const KernelSpec& spec, Coalition a, Coalition b, DistanceProvider& distances);

// Assembles a kernel matrix, computing each distinct unordered coalition
// pair once; `threads` bounds the worker count (0 = hardware).
KernelMatrix build_matrix(const KernelSpec& spec, std::span<const Coalition> rows,
                          std::span<const Coalition> cols, DistanceProvider& distances,
                          int threads = 0);

struct PsdReport {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool pass = false;
};

// pass iff min eigenvalue >= -tolerance * max(1, max eigenvalue).
PsdReport psd_check(const KernelMatrix& k, double tolerance);

}  // namespace coval

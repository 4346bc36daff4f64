#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "coval/common.hpp"
#include "coval/dataset.hpp"

namespace coval {

// Sorted projections are stored one direction per row, so each row is a
// contiguous, already-sorted 1-D sample.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// How the L per-direction transport costs are combined.
//   per_slice_root: mean_l (integral_l)^{1/p} — each slice contributes its own
//     W_p, the literal reading of the accumulation loop; the default.
//   root_of_mean:   (mean_l integral_l)^{1/p} — the conventional SW_p. Kernels
//     use this form internally because the positive-definiteness argument is
//     stated for it; the two coincide at p = 1.
enum class SliceAggregation { per_slice_root, root_of_mean };

struct SWParams {
  int p = 2;                // transport order, 1 or 2
  double rho = 1.0;         // distance exponent in (0, 1], applied by kernels
  int projections = 100;    // L
  std::uint64_t seed = 0;
  SliceAggregation aggregation = SliceAggregation::per_slice_root;

  void validate() const;
};

// L unit directions on the sphere in R^d, deterministic under (seed, L, d).
class ProjectionSet {
public:
  ProjectionSet(int count, int dim, std::uint64_t seed);

  const Eigen::MatrixXd& directions() const { return dirs_; }  // L x d, unit rows
  int count() const { return static_cast<int>(dirs_.rows()); }
  int dim() const { return static_cast<int>(dirs_.cols()); }
  std::uint64_t seed() const { return seed_; }

private:
  Eigen::MatrixXd dirs_;
  std::uint64_t seed_;
};

// Marks a cache as holding projections of supervised-transformed points, so
// distance calls can verify they are reading the space they expect.
struct TransformInfo {
  double eta = 1.0;
  int feature_dim = 0;  // m, before the transform
  int target_dim = 0;   // 1 for regression, embedding dim for classification
};

// Per-coalition sorted 1-D projections under one shared ProjectionSet.
// Build phase is exclusive (single writer); after freeze() all reads are
// safe concurrently.
class ProjectionCache {
public:
  ProjectionCache() = default;  // unusable until assigned from a real cache
  explicit ProjectionCache(std::shared_ptr<const ProjectionSet> directions,
                           std::optional<TransformInfo> transform = std::nullopt);

  // Projects `points` (rows x d) along every direction and stores the sorted
  // results.  Idempotent: re-adding a present coalition is a no-op.
  void add(Coalition c, const Eigen::MatrixXd& points);
  bool contains(Coalition c) const;
  const RowMatrixXd& sorted(Coalition c) const;  // L x row-count

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  const ProjectionSet& directions() const {
    if (!dirs_) throw ContractError(Errc::cache_miss, "projection cache has no direction set");
    return *dirs_;
  }
  std::shared_ptr<const ProjectionSet> directions_ptr() const { return dirs_; }
  const std::optional<TransformInfo>& transform() const { return transform_; }
  std::size_t size() const { return store_.size(); }

private:
  std::shared_ptr<const ProjectionSet> dirs_;
  std::optional<TransformInfo> transform_;
  std::vector<std::pair<Coalition, RowMatrixXd>> store_;  // sorted by coalition bits
  bool frozen_ = false;

  std::ptrdiff_t find(Coalition c) const;
};

// Exact p-th power transport cost between two sorted empirical samples with
// uniform weights: the quantile-difference integral evaluated segment by
// segment on the union of the two CDFs' breakpoints.
double quantile_integral(std::span<const double> a, std::span<const double> b, int p);

// W_p = (quantile_integral)^{1/p}.  Inputs must be sorted ascending.
double wasserstein_1d(std::span<const double> a, std::span<const double> b, int p);

// Transport cost between two cached coalitions averaged over the shared
// directions; only the per-pair quantile integral runs here, projection and
// sorting are served from the cache.
double sliced_wasserstein(Coalition a, Coalition b, const SWParams& params,
                          const ProjectionCache& cache);

// Euclidean coordinates for class labels, preserving between-class transport
// distances as well as a q-dimensional embedding can.
struct LabelEmbedding {
  Eigen::MatrixXd coords;  // K x q
  double stress = 0.0;     // relative Frobenius residual of the distance matrix

  int classes() const { return static_cast<int>(coords.rows()); }
  int dim() const { return static_cast<int>(coords.cols()); }
  Eigen::VectorXd embed(int label) const;
  double distance(int a, int b) const;
};

// K x K matrix of sliced Wasserstein distances between the per-class feature
// distributions pooled over all owners.
Eigen::MatrixXd class_distance_matrix(const std::vector<OwnerDataset>& owners,
                                      const SWParams& params);

// Classical multidimensional scaling: double-center the squared distances,
// eigendecompose, keep the top q non-negative eigenvalues.  q <= 0 picks
// min(K-1, 8).
LabelEmbedding mds_embed(const Eigen::MatrixXd& distances, int q);

LabelEmbedding build_label_embedding(const std::vector<OwnerDataset>& owners, const SWParams& params,
                                     int q = 0);

// The supervised transform: rows become [eta * x, (1-eta) * t] where t is the
// raw target (regression) or its label embedding (classification).
Eigen::MatrixXd g_eta_transform(const AggregatedDataset& d, double eta, Task task,
                                const LabelEmbedding* embedding);

// Supervised sliced Wasserstein: sliced_wasserstein over a cache that holds
// projections of g_eta_transform outputs.  eta and embedding are re-checked
// against what the cache was built with.
double ssw_distance(Coalition a, Coalition b, double eta, const SWParams& params,
                    const LabelEmbedding* embedding, const ProjectionCache& transformed_cache);

// ---------------------------------------------------------------------------
// Exact dataset-to-dataset transport baseline.
// ---------------------------------------------------------------------------

struct OtddParams {
  int p = 2;               // feature-metric order
  int max_points = 2000;   // guard: |D_A| + |D_B| above this refuses to solve
};

// Minimum-cost transportation between integer supplies and demands under a
// dense non-negative cost matrix; returns sum(flow * cost).  Exact LP via
// successive shortest paths.
double min_cost_transport(const Eigen::MatrixXd& cost, std::span<const long long> supply,
                          std::span<const long long> demand);

// Point-cloud distance with ground cost ||x - x'||^p + d_label(y, y'), the
// label term being the transport distance between the two classes' pooled
// feature distributions (class_sw1, computed at p = 1).  Returns the p-th
// root of the optimal coupling cost.
double otdd_distance(const AggregatedDataset& a, const AggregatedDataset& b,
                     const Eigen::MatrixXd& class_sw1, const OtddParams& params);

}  // namespace coval

#include "coval/transport.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace coval {

void SWParams::validate() const {
  if (p != 1 && p != 2)
    throw ConfigError(Errc::bad_parameter, "transport order p must be 1 or 2, got " + std::to_string(p));
  if (!(rho > 0.0 && rho <= 1.0))
    throw ConfigError(Errc::bad_parameter, "rho must lie in (0, 1]");
  if (projections < 1)
    throw ConfigError(Errc::bad_parameter, "projection count must be >= 1");
}

ProjectionSet::ProjectionSet(int count, int dim, std::uint64_t seed) : seed_(seed) {
  if (count < 1 || dim < 1)
    throw ConfigError(Errc::bad_parameter, "projection set needs count >= 1 and dim >= 1");
  dirs_.resize(count, dim);
  Rng rng(derive_seed(seed, /*tag=*/0x50524f4aull));  // "PROJ"
  for (int l = 0; l < count; ++l) {
    double norm2 = 0.0;
    do {
      for (int d = 0; d < dim; ++d) dirs_(l, d) = rng.gaussian();
      norm2 = dirs_.row(l).squaredNorm();
    } while (norm2 == 0.0);
    dirs_.row(l) /= std::sqrt(norm2);
  }
}

ProjectionCache::ProjectionCache(std::shared_ptr<const ProjectionSet> directions,
                                 std::optional<TransformInfo> transform)
    : dirs_(std::move(directions)), transform_(std::move(transform)) {
  if (!dirs_) throw ContractError(Errc::bad_parameter, "projection cache needs a projection set");
}

std::ptrdiff_t ProjectionCache::find(Coalition c) const {
  auto it = std::lower_bound(store_.begin(), store_.end(), c,
                             [](const auto& entry, Coalition key) { return entry.first < key; });
  if (it == store_.end() || it->first != c) return -1;
  return it - store_.begin();
}

void ProjectionCache::add(Coalition c, const Eigen::MatrixXd& points) {
  if (!dirs_) throw ContractError(Errc::cache_miss, "projection cache has no direction set");
  if (frozen_) throw ContractError(Errc::frozen_cache, "projection cache is frozen");
  if (points.rows() < 1)
    throw ContractError(Errc::empty_distribution, "no points to project for " + c.to_string());
  if (points.cols() != dirs_->dim())
    throw ContractError(Errc::dimension_mismatch,
                        "points have dimension " + std::to_string(points.cols()) +
                            ", projection set expects " + std::to_string(dirs_->dim()));
  if (find(c) >= 0) return;
  RowMatrixXd proj = dirs_->directions() * points.transpose();  // L x rows
  for (Eigen::Index l = 0; l < proj.rows(); ++l) {
    double* begin = proj.data() + l * proj.cols();
    std::sort(begin, begin + proj.cols());
  }
  auto it = std::lower_bound(store_.begin(), store_.end(), c,
                             [](const auto& entry, Coalition key) { return entry.first < key; });
  store_.insert(it, {c, std::move(proj)});
}

bool ProjectionCache::contains(Coalition c) const { return find(c) >= 0; }

const RowMatrixXd& ProjectionCache::sorted(Coalition c) const {
  const std::ptrdiff_t at = find(c);
  if (at < 0)
    throw ContractError(Errc::cache_miss, "coalition " + c.to_string() + " was never projected");
  return store_[static_cast<std::size_t>(at)].second;
}

double quantile_integral(std::span<const double> a, std::span<const double> b, int p) {
  if (a.empty() || b.empty())
    throw ContractError(Errc::empty_distribution, "transport between empty samples");
  if (p != 1 && p != 2) throw ConfigError(Errc::bad_parameter, "transport order p must be 1 or 2");
  const auto n = static_cast<long long>(a.size());
  const auto m = static_cast<long long>(b.size());
  // Both inverse CDFs are step functions with breakpoints at i/n and j/m.
  // Walking the merged breakpoints in units of 1/(n*m) keeps every segment
  // boundary exact (integer cross-multiplication, no float ties).
  long long i = 0, j = 0, prev = 0;
  const double denom = static_cast<double>(n) * static_cast<double>(m);
  double total = 0.0;
  while (i < n && j < m) {
    const long long zi = (i + 1) * m;
    const long long zj = (j + 1) * n;
    const long long z = zi < zj ? zi : zj;
    const double diff = std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)]);
    total += static_cast<double>(z - prev) / denom * (p == 1 ? diff : diff * diff);
    prev = z;
    if (zi == z) ++i;
    if (zj == z) ++j;
  }
  return total;
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b, int p) {
  const double integral = quantile_integral(a, b, p);
  return p == 1 ? integral : std::sqrt(integral);
}

double sliced_wasserstein(Coalition a, Coalition b, const SWParams& params,
                          const ProjectionCache& cache) {
  params.validate();
  if (params.projections != cache.directions().count())
    throw ContractError(Errc::dimension_mismatch,
                        "params ask for " + std::to_string(params.projections) +
                            " projections, cache holds " +
                            std::to_string(cache.directions().count()));
  if (a == b) return 0.0;
  const RowMatrixXd& pa = cache.sorted(a);
  const RowMatrixXd& pb = cache.sorted(b);
  const int L = params.projections;
  double acc = 0.0;
  for (int l = 0; l < L; ++l) {
    std::span<const double> ra(pa.data() + static_cast<std::ptrdiff_t>(l) * pa.cols(),
                               static_cast<std::size_t>(pa.cols()));
    std::span<const double> rb(pb.data() + static_cast<std::ptrdiff_t>(l) * pb.cols(),
                               static_cast<std::size_t>(pb.cols()));
    const double integral = quantile_integral(ra, rb, params.p);
    acc += params.aggregation == SliceAggregation::per_slice_root && params.p == 2
               ? std::sqrt(integral)
               : integral;
  }
  acc /= L;
  if (params.aggregation == SliceAggregation::root_of_mean && params.p == 2) acc = std::sqrt(acc);
  return acc;
}

Eigen::VectorXd LabelEmbedding::embed(int label) const {
  if (label < 0 || label >= classes())
    throw ContractError(Errc::unknown_class, "label " + std::to_string(label) +
                                                 " outside the embedded classes [0, " +
                                                 std::to_string(classes()) + ")");
  return coords.row(label).transpose();
}

double LabelEmbedding::distance(int a, int b) const {
  return (embed(a) - embed(b)).norm();
}

Eigen::MatrixXd class_distance_matrix(const std::vector<OwnerDataset>& owners,
                                      const SWParams& params) {
  params.validate();
  validate_owners(owners, Task::classification);
  const int K = num_classes(owners);
  const Eigen::Index m = owners.front().features.cols();

  // Pool each class's points over the whole universe of owners.
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(K), 0);
  for (const auto& o : owners)
    for (Eigen::Index r = 0; r < o.targets.size(); ++r)
      ++counts[static_cast<std::size_t>(o.targets[r])];
  for (int k = 0; k < K; ++k)
    if (counts[static_cast<std::size_t>(k)] == 0)
      throw ConfigError(Errc::unknown_class,
                        "class " + std::to_string(k) + " has no points in the pooled data");

  std::vector<Eigen::MatrixXd> pooled(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) pooled[static_cast<std::size_t>(k)].resize(counts[static_cast<std::size_t>(k)], m);
  std::vector<Eigen::Index> fill(static_cast<std::size_t>(K), 0);
  for (const auto& o : owners)
    for (Eigen::Index r = 0; r < o.targets.size(); ++r) {
      const auto k = static_cast<std::size_t>(o.targets[r]);
      pooled[k].row(fill[k]++) = o.features.row(r);
    }

  // Shared directions for all class pairs; a side stream so the class matrix
  // does not depend on how many coalition caches were built before it.
  auto dirs = std::make_shared<const ProjectionSet>(params.projections, static_cast<int>(m),
                                                    derive_seed(params.seed, /*tag=*/0x4c424cull));
  ProjectionCache cache(dirs);
  for (int k = 0; k < K; ++k)
    cache.add(Coalition::single(k), pooled[static_cast<std::size_t>(k)]);
  cache.freeze();

  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      const double d = sliced_wasserstein(Coalition::single(i), Coalition::single(j), params, cache);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  return dist;
}

LabelEmbedding mds_embed(const Eigen::MatrixXd& distances, int q) {
  if (distances.rows() != distances.cols())
    throw ContractError(Errc::non_square, "distance matrix must be square");
  const int K = static_cast<int>(distances.rows());
  if (K < 1) throw ContractError(Errc::empty_distribution, "distance matrix is empty");
  if (q <= 0) q = std::min(K - 1, 8);
  if (K == 1) {
    // Single class: nothing to separate, the embedding is the zero vector.
    LabelEmbedding e;
    e.coords = Eigen::MatrixXd::Zero(1, 1);
    e.stress = 0.0;
    return e;
  }
  q = std::min(q, K - 1);

  const Eigen::MatrixXd sym = 0.5 * (distances + distances.transpose());
  const Eigen::MatrixXd d2 = sym.cwiseProduct(sym);
  const Eigen::MatrixXd j =
      Eigen::MatrixXd::Identity(K, K) - Eigen::MatrixXd::Constant(K, K, 1.0 / K);
  const Eigen::MatrixXd gram = -0.5 * j * d2 * j;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw NumericError(Errc::factorization_failure, "eigendecomposition failed in label embedding");

  // Eigenvalues come out ascending; take the top q, truncating negative ones
  // (the transport distance matrix need not be Euclidean-embeddable).
  LabelEmbedding e;
  e.coords = Eigen::MatrixXd::Zero(K, q);
  for (int c = 0; c < q; ++c) {
    const int idx = K - 1 - c;
    const double lambda = eig.eigenvalues()[idx];
    if (lambda > 0.0) e.coords.col(c) = std::sqrt(lambda) * eig.eigenvectors().col(idx);
  }

  double num = 0.0, den = 0.0;
  for (int i = 0; i < K; ++i)
    for (int j2 = i + 1; j2 < K; ++j2) {
      const double dij = (e.coords.row(i) - e.coords.row(j2)).norm();
      num += (sym(i, j2) - dij) * (sym(i, j2) - dij);
      den += sym(i, j2) * sym(i, j2);
    }
  e.stress = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return e;
}

LabelEmbedding build_label_embedding(const std::vector<OwnerDataset>& owners,
                                     const SWParams& params, int q) {
  const Eigen::MatrixXd dist = class_distance_matrix(owners, params);
  return mds_embed(dist, q);
}

Eigen::MatrixXd g_eta_transform(const AggregatedDataset& d, double eta, Task task,
                                const LabelEmbedding* embedding) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw ConfigError(Errc::bad_parameter, "eta must lie in (0, 1]");
  const Eigen::Index rows = d.features.rows();
  const Eigen::Index m = d.features.cols();
  if (task == Task::regression) {
    Eigen::MatrixXd out(rows, m + 1);
    out.leftCols(m) = eta * d.features;
    out.col(m) = (1.0 - eta) * d.targets;
    return out;
  }
  if (embedding == nullptr)
    throw ContractError(Errc::missing_embedding,
                        "classification transform needs a label embedding");
  const int q = embedding->dim();
  Eigen::MatrixXd out(rows, m + q);
  out.leftCols(m) = eta * d.features;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double y = d.targets[r];
    if (y < 0.0 || y != std::floor(y))
      throw ContractError(Errc::unknown_class, "classification target is not a class id");
    out.row(r).tail(q) = (1.0 - eta) * embedding->embed(static_cast<int>(y)).transpose();
  }
  return out;
}

double ssw_distance(Coalition a, Coalition b, double eta, const SWParams& params,
                    const LabelEmbedding* embedding, const ProjectionCache& transformed_cache) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw ConfigError(Errc::bad_parameter, "eta must lie in (0, 1]");
  const auto& info = transformed_cache.transform();
  if (!info)
    throw ContractError(Errc::cache_miss,
                        "supervised distance needs a cache built over transformed points");
  if (info->eta != eta)
    throw ContractError(Errc::cache_miss, "cache was built for a different eta");
  const int target_dim = embedding ? embedding->dim() : 1;
  if (info->target_dim != target_dim)
    throw ContractError(Errc::dimension_mismatch, "cache target dimension does not match embedding");
  return sliced_wasserstein(a, b, params, transformed_cache);
}

// ---------------------------------------------------------------------------
// Exact transportation LP: successive shortest paths with node potentials.
// Forward arcs are uncapacitated, so every augmentation exhausts a source or
// a sink, bounding the number of Dijkstra runs by (sources + sinks).
// ---------------------------------------------------------------------------

double min_cost_transport(const Eigen::MatrixXd& cost, std::span<const long long> supply,
                          std::span<const long long> demand) {
  const int n = static_cast<int>(supply.size());
  const int m = static_cast<int>(demand.size());
  if (n == 0 || m == 0)
    throw ContractError(Errc::empty_distribution, "transport needs at least one source and sink");
  if (cost.rows() != n || cost.cols() != m)
    throw ContractError(Errc::dimension_mismatch, "cost matrix does not match supply/demand sizes");
  long long total_supply = 0, total_demand = 0;
  for (long long s : supply) {
    if (s < 0) throw ContractError(Errc::bad_parameter, "negative supply");
    total_supply += s;
  }
  for (long long d : demand) {
    if (d < 0) throw ContractError(Errc::bad_parameter, "negative demand");
    total_demand += d;
  }
  if (total_supply != total_demand)
    throw ContractError(Errc::bad_parameter, "total supply must equal total demand");
  if (cost.minCoeff() < 0.0)
    throw ContractError(Errc::bad_parameter, "transport costs must be non-negative");

  std::vector<long long> remaining_supply(supply.begin(), supply.end());
  std::vector<long long> remaining_demand(demand.begin(), demand.end());
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> flow =
      Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, m);
  std::vector<double> pot_src(static_cast<std::size_t>(n), 0.0);
  std::vector<double> pot_snk(static_cast<std::size_t>(m), 0.0);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  long long units_left = total_supply;
  while (units_left > 0) {
    // Dense Dijkstra over the residual graph with reduced costs, started
    // from every source that still has supply.
    std::vector<double> dist_src(static_cast<std::size_t>(n), kInf);
    std::vector<double> dist_snk(static_cast<std::size_t>(m), kInf);
    std::vector<int> parent_of_sink(static_cast<std::size_t>(m), -1);  // source feeding the sink
    std::vector<int> parent_of_src(static_cast<std::size_t>(n), -1);   // sink whose back-arc reached it
    std::vector<bool> done_src(static_cast<std::size_t>(n), false);
    std::vector<bool> done_snk(static_cast<std::size_t>(m), false);
    for (int i = 0; i < n; ++i)
      if (remaining_supply[static_cast<std::size_t>(i)] > 0) dist_src[static_cast<std::size_t>(i)] = 0.0;

    while (true) {
      int best_i = -1, best_j = -1;
      double best = kInf;
      for (int i = 0; i < n; ++i)
        if (!done_src[static_cast<std::size_t>(i)] && dist_src[static_cast<std::size_t>(i)] < best) {
          best = dist_src[static_cast<std::size_t>(i)];
          best_i = i;
          best_j = -1;
        }
      for (int j = 0; j < m; ++j)
        if (!done_snk[static_cast<std::size_t>(j)] && dist_snk[static_cast<std::size_t>(j)] < best) {
          best = dist_snk[static_cast<std::size_t>(j)];
          best_j = j;
          best_i = -1;
        }
      if (best_i < 0 && best_j < 0) break;
      if (best_i >= 0) {
        done_src[static_cast<std::size_t>(best_i)] = true;
        // forward arcs source -> every sink
        for (int j = 0; j < m; ++j) {
          if (done_snk[static_cast<std::size_t>(j)]) continue;
          const double reduced = cost(best_i, j) + pot_src[static_cast<std::size_t>(best_i)] -
                                 pot_snk[static_cast<std::size_t>(j)];
          const double cand = best + reduced;
          if (cand < dist_snk[static_cast<std::size_t>(j)]) {
            dist_snk[static_cast<std::size_t>(j)] = cand;
            parent_of_sink[static_cast<std::size_t>(j)] = best_i;
          }
        }
      } else {
        done_snk[static_cast<std::size_t>(best_j)] = true;
        // backward arcs sink -> sources with positive flow
        for (int i = 0; i < n; ++i) {
          if (done_src[static_cast<std::size_t>(i)] || flow(i, best_j) == 0) continue;
          const double reduced = -cost(i, best_j) - pot_src[static_cast<std::size_t>(i)] +
                                 pot_snk[static_cast<std::size_t>(best_j)];
          const double cand = best + reduced;
          if (cand < dist_src[static_cast<std::size_t>(i)]) {
            dist_src[static_cast<std::size_t>(i)] = cand;
            parent_of_src[static_cast<std::size_t>(i)] = best_j;
          }
        }
      }
    }

    int target = -1;
    double target_dist = kInf;
    for (int j = 0; j < m; ++j)
      if (remaining_demand[static_cast<std::size_t>(j)] > 0 &&
          dist_snk[static_cast<std::size_t>(j)] < target_dist) {
        target_dist = dist_snk[static_cast<std::size_t>(j)];
        target = j;
      }
    if (target < 0)
      throw NumericError(Errc::not_finite, "transport network disconnected (non-finite costs?)");

    // Trace the alternating path back to a source and find the bottleneck.
    long long bottleneck = remaining_demand[static_cast<std::size_t>(target)];
    {
      int j = target;
      while (true) {
        const int i = parent_of_sink[static_cast<std::size_t>(j)];
        const int back = parent_of_src[static_cast<std::size_t>(i)];
        if (back < 0) {
          bottleneck = std::min(bottleneck, remaining_supply[static_cast<std::size_t>(i)]);
          break;
        }
        bottleneck = std::min(bottleneck, flow(i, back));
        j = back;
      }
    }
    {
      int j = target;
      while (true) {
        const int i = parent_of_sink[static_cast<std::size_t>(j)];
        flow(i, j) += bottleneck;
        const int back = parent_of_src[static_cast<std::size_t>(i)];
        if (back < 0) {
          remaining_supply[static_cast<std::size_t>(i)] -= bottleneck;
          break;
        }
        flow(i, back) -= bottleneck;
        j = back;
      }
    }
    remaining_demand[static_cast<std::size_t>(target)] -= bottleneck;
    units_left -= bottleneck;

    // Johnson-style potential update keeps reduced costs non-negative.
    for (int i = 0; i < n; ++i)
      pot_src[static_cast<std::size_t>(i)] +=
          std::min(dist_src[static_cast<std::size_t>(i)], target_dist);
    for (int j = 0; j < m; ++j)
      pot_snk[static_cast<std::size_t>(j)] +=
          std::min(dist_snk[static_cast<std::size_t>(j)], target_dist);
  }

  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (flow(i, j) > 0) total += static_cast<double>(flow(i, j)) * cost(i, j);
  return total;
}

double otdd_distance(const AggregatedDataset& a, const AggregatedDataset& b,
                     const Eigen::MatrixXd& class_sw1, const OtddParams& params) {
  if (params.p != 1 && params.p != 2)
    throw ConfigError(Errc::bad_parameter, "transport order p must be 1 or 2");
  const Eigen::Index na = a.features.rows();
  const Eigen::Index nb = b.features.rows();
  if (na == 0 || nb == 0)
    throw ContractError(Errc::empty_distribution, "dataset distance between empty datasets");
  if (a.features.cols() != b.features.cols())
    throw ContractError(Errc::dimension_mismatch, "datasets have different feature dimensions");
  if (na + nb > params.max_points)
    throw ConfigError(Errc::bad_parameter,
                      "instance has " + std::to_string(na + nb) +
                          " points, above the exact-solver guard of " +
                          std::to_string(params.max_points));
  const int K = static_cast<int>(class_sw1.rows());
  if (class_sw1.cols() != K)
    throw ContractError(Errc::non_square, "class distance matrix must be square");
  auto class_of = [&](double y) {
    if (y < 0.0 || y != std::floor(y) || static_cast<int>(y) >= K)
      throw ConfigError(Errc::regression_unsupported,
                        "dataset distance needs classification targets matching the class matrix");
    return static_cast<int>(y);
  };

  Eigen::MatrixXd cost(na, nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    const int yi = class_of(a.targets[i]);
    for (Eigen::Index j = 0; j < nb; ++j) {
      const int yj = class_of(b.targets[j]);
      const double feat = (a.features.row(i) - b.features.row(j)).norm();
      cost(i, j) = (params.p == 1 ? feat : feat * feat) + class_sw1(yi, yj);
    }
  }

  // Uniform masses 1/na and 1/nb become integers when scaled by na*nb.
  std::vector<long long> supply(static_cast<std::size_t>(na), static_cast<long long>(nb));
  std::vector<long long> demand(static_cast<std::size_t>(nb), static_cast<long long>(na));
  const double units = static_cast<double>(na) * static_cast<double>(nb);
  const double value = min_cost_transport(cost, supply, demand) / units;
  return params.p == 1 ? value : std::sqrt(value);
}

}  // namespace coval

#include "coval/kernel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>

namespace coval {

std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::ssw_sq_exp: return "ssw_sq_exp";
    case KernelFamily::ssw_l1_exp: return "ssw_l1_exp";
    case KernelFamily::binary_rbf: return "binary_rbf";
    case KernelFamily::otdd_exp: return "otdd_exp";
  }
  throw ContractError(Errc::bad_parameter, "unhandled kernel family");
}

KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "ssw_sq_exp") return KernelFamily::ssw_sq_exp;
  if (s == "ssw_l1_exp") return KernelFamily::ssw_l1_exp;
  if (s == "binary_rbf") return KernelFamily::binary_rbf;
  if (s == "otdd_exp") return KernelFamily::otdd_exp;
  throw ConfigError(Errc::bad_parameter, "unknown kernel family '" + s + "'");
}

void KernelSpec::validate() const {
  if (!(gamma > 0.0)) throw ConfigError(Errc::bad_parameter, "gamma must be > 0");
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError(Errc::bad_parameter, "eta must lie in (0, 1]");
  sw.validate();
}

DistanceKind distance_kind_of(KernelFamily f) {
  switch (f) {
    case KernelFamily::ssw_sq_exp: return DistanceKind::ssw_p2;
    case KernelFamily::ssw_l1_exp: return DistanceKind::ssw_p1;
    case KernelFamily::binary_rbf: return DistanceKind::indicator;
    case KernelFamily::otdd_exp: return DistanceKind::otdd_p2;
  }
  throw ContractError(Errc::bad_parameter, "unhandled kernel family");
}

double distance_exponent(KernelFamily f, double rho) {
  switch (f) {
    case KernelFamily::ssw_sq_exp:
    case KernelFamily::otdd_exp: return 2.0 * rho;
    case KernelFamily::ssw_l1_exp: return rho;
    case KernelFamily::binary_rbf: return 1.0;  // already a squared Euclidean distance
  }
  throw ContractError(Errc::bad_parameter, "unhandled kernel family");
}

namespace {

double powered(double raw, double exponent) {
  if (raw == 0.0) return 0.0;
  if (exponent == 1.0) return raw;
  if (exponent == 2.0) return raw * raw;
  return std::pow(raw, exponent);
}

}  // namespace

double apply_kernel(double raw_distance, KernelFamily f, double gamma, double rho) {
  return std::exp(-gamma * powered(raw_distance, distance_exponent(f, rho)));
}

DistanceProvider::DistanceProvider(std::vector<OwnerDataset> owners, Task task, int projections,
                                   std::uint64_t seed)
    : owners_(std::move(owners)), task_(task), projections_(projections), seed_(seed) {
  validate_owners(owners_, task_);
  if (projections_ < 1) throw ConfigError(Errc::bad_parameter, "projection count must be >= 1");
  const int m = static_cast<int>(owners_.front().features.cols());

  if (task_ == Task::classification) {
    SWParams embed_params;
    embed_params.p = 2;
    embed_params.projections = projections_;
    embed_params.seed = seed_;
    embedding_ = build_label_embedding(owners_, embed_params, /*q=*/0);
    embedding_built_ = true;
  }

  raw_dirs_ = std::make_shared<const ProjectionSet>(projections_, m, seed_);
  supervised_dirs_ = std::make_shared<const ProjectionSet>(projections_, m + target_dim(), seed_);
  raw_cache_ = ProjectionCache(raw_dirs_);
}

int DistanceProvider::target_dim() const {
  return task_ == Task::regression ? 1 : embedding_.dim();
}

const LabelEmbedding& DistanceProvider::embedding() const {
  if (!embedding_built_)
    throw ContractError(Errc::missing_embedding, "regression problems have no label embedding");
  return embedding_;
}

const AggregatedDataset& DistanceProvider::aggregate_of(Coalition c) {
  auto it = aggregates_.find(c.bits());
  if (it == aggregates_.end())
    it = aggregates_.emplace(c.bits(), aggregate(owners_, c)).first;
  return it->second;
}

void DistanceProvider::prepare(std::span<const Coalition> coalitions, DistanceKind kind,
                               double eta) {
  switch (kind) {
    case DistanceKind::indicator:
      return;
    case DistanceKind::raw_p1:
    case DistanceKind::raw_p2: {
      for (Coalition c : coalitions)
        if (!raw_cache_.contains(c)) raw_cache_.add(c, aggregate_of(c).features);
      return;
    }
    case DistanceKind::ssw_p1:
    case DistanceKind::ssw_p2: {
      if (!(eta > 0.0 && eta <= 1.0))
        throw ConfigError(Errc::bad_parameter, "eta must lie in (0, 1]");
      const std::uint64_t key = std::bit_cast<std::uint64_t>(eta);
      auto it = eta_caches_.find(key);
      if (it == eta_caches_.end()) {
        TransformInfo info;
        info.eta = eta;
        info.feature_dim = static_cast<int>(owners_.front().features.cols());
        info.target_dim = target_dim();
        it = eta_caches_.emplace(key, ProjectionCache(supervised_dirs_, info)).first;
      }
      const LabelEmbedding* embed = task_ == Task::classification ? &embedding_ : nullptr;
      for (Coalition c : coalitions)
        if (!it->second.contains(c))
          it->second.add(c, g_eta_transform(aggregate_of(c), eta, task_, embed));
      return;
    }
    case DistanceKind::otdd_p1:
    case DistanceKind::otdd_p2: {
      if (task_ != Task::classification)
        throw ConfigError(Errc::regression_unsupported,
                          "the dataset-transport baseline needs classification targets");
      if (!class_sw1_built_) {
        SWParams label_params;
        label_params.p = 1;
        label_params.projections = projections_;
        label_params.seed = seed_;
        class_sw1_ = class_distance_matrix(owners_, label_params);
        class_sw1_built_ = true;
      }
      for (Coalition c : coalitions) aggregate_of(c);
      return;
    }
  }
  throw ContractError(Errc::bad_parameter, "unhandled distance kind");
}

double DistanceProvider::compute(DistanceKind kind, Coalition a, Coalition b, double eta,
                                 SliceAggregation aggregation) {
  SWParams params;
  params.projections = projections_;
  params.seed = seed_;
  params.aggregation = aggregation;
  switch (kind) {
    case DistanceKind::indicator:
      return Coalition::symmetric_difference(a, b);
    case DistanceKind::raw_p1:
    case DistanceKind::raw_p2:
      params.p = kind == DistanceKind::raw_p1 ? 1 : 2;
      return sliced_wasserstein(a, b, params, raw_cache_);
    case DistanceKind::ssw_p1:
    case DistanceKind::ssw_p2: {
      params.p = kind == DistanceKind::ssw_p1 ? 1 : 2;
      auto it = eta_caches_.find(std::bit_cast<std::uint64_t>(eta));
      if (it == eta_caches_.end())
        throw ContractError(Errc::cache_miss,
                            "no projections prepared for this eta; call prepare() first");
      const LabelEmbedding* embed = task_ == Task::classification ? &embedding_ : nullptr;
      return ssw_distance(a, b, eta, params, embed, it->second);
    }
    case DistanceKind::otdd_p1:
    case DistanceKind::otdd_p2: {
      if (!class_sw1_built_)
        throw ContractError(Errc::cache_miss,
                            "class distances not prepared; call prepare() first");
      auto ita = aggregates_.find(a.bits());
      auto itb = aggregates_.find(b.bits());
      if (ita == aggregates_.end() || itb == aggregates_.end())
        throw ContractError(Errc::cache_miss, "coalition not prepared for the transport baseline");
      OtddParams op;
      op.p = kind == DistanceKind::otdd_p1 ? 1 : 2;
      return otdd_distance(ita->second, itb->second, class_sw1_, op);
    }
  }
  throw ContractError(Errc::bad_parameter, "unhandled distance kind");
}

double DistanceProvider::distance(DistanceKind kind, Coalition a, Coalition b, double eta,
                                  SliceAggregation aggregation) {
  if (a == b) return 0.0;
  if (kind == DistanceKind::indicator) return Coalition::symmetric_difference(a, b);
  MemoKey key{kind, aggregation, std::bit_cast<std::uint64_t>(eta),
              std::min(a.bits(), b.bits()), std::max(a.bits(), b.bits())};
  {
    std::lock_guard lock(memo_mutex_);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
  }
  const double value = compute(kind, a, b, eta, aggregation);
  {
    std::lock_guard lock(memo_mutex_);
    auto [it, inserted] = memo_.emplace(key, value);
    if (inserted) ++evaluations_;
    return it->second;
  }
}

std::size_t DistanceProvider::transport_evaluations() const {
  std::lock_guard lock(memo_mutex_);
  return evaluations_;
}

double kernel_value(const KernelSpec& spec, Coalition a, Coalition b, DistanceProvider& distances) {
  spec.validate();
  const double raw = distances.distance(distance_kind_of(spec.family), a, b, spec.eta);
  return apply_kernel(raw, spec.family, spec.gamma, spec.sw.rho);
}

KernelMatrix build_matrix(const KernelSpec& spec, std::span<const Coalition> rows,
                          std::span<const Coalition> cols, DistanceProvider& distances,
                          int threads) {
  spec.validate();
  const DistanceKind kind = distance_kind_of(spec.family);

  std::vector<Coalition> all(rows.begin(), rows.end());
  all.insert(all.end(), cols.begin(), cols.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  distances.prepare(all, kind, spec.eta);

  // Each distinct unordered pair is computed once, in parallel.
  std::vector<std::pair<Coalition, Coalition>> pairs;
  {
    std::map<std::pair<std::uint64_t, std::uint64_t>, bool> seen;
    for (Coalition a : rows)
      for (Coalition b : cols) {
        if (a == b) continue;
        const auto key = std::minmax(a.bits(), b.bits());
        if (seen.emplace(key, true).second)
          pairs.emplace_back(Coalition(key.first), Coalition(key.second));
      }
  }
  std::vector<double> raw(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    raw[i] = distances.distance(kind, pairs[i].first, pairs[i].second, spec.eta);
  });

  KernelMatrix out;
  out.rows.assign(rows.begin(), rows.end());
  out.cols.assign(cols.begin(), cols.end());
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      // memo hit: the parallel pass has populated every pair
      const double d = distances.distance(kind, rows[i], cols[j], spec.eta);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          apply_kernel(d, spec.family, spec.gamma, spec.sw.rho);
    }
  return out;
}

PsdReport psd_check(const KernelMatrix& k, double tolerance) {
  if (k.values.rows() != k.values.cols())
    throw ContractError(Errc::non_square, "eigenvalue check needs a square matrix");
  const double asym = (k.values - k.values.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9)
    throw ContractError(Errc::non_square,
                        "matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  const Eigen::MatrixXd sym = 0.5 * (k.values + k.values.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success)
    throw NumericError(Errc::factorization_failure, "eigendecomposition failed");
  PsdReport report;
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.max_eigenvalue = eig.eigenvalues().maxCoeff();
  report.pass = report.min_eigenvalue >= -tolerance * std::max(1.0, report.max_eigenvalue);
  return report;
}

}  // namespace coval

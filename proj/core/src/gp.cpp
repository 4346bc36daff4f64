#include "coval/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coval {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

const std::vector<double>& jitter_ladder() {
  static const std::vector<double> ladder{0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
  return ladder;
}

struct FactorizedFit {
  Eigen::LLT<Eigen::MatrixXd> chol;
  double jitter = 0.0;
  double loglik = 0.0;
  Eigen::VectorXd alpha;  // against the centered utilities
  bool ok = false;
};

// Factorize K + (sigma2 + jitter) I, walking the jitter ladder, and compute
// the exact log marginal likelihood of the centered utilities.
FactorizedFit factorize(const Eigen::MatrixXd& k, double sigma2, const Eigen::VectorXd& centered) {
  FactorizedFit out;
  const Eigen::Index a = k.rows();
  for (double jitter : jitter_ladder()) {
    Eigen::MatrixXd m = k;
    m.diagonal().array() += sigma2 + jitter;
    Eigen::LLT<Eigen::MatrixXd> chol(m);
    if (chol.info() != Eigen::Success) continue;
    // Guard against a numerically meaningless factor (non-finite entries).
    const Eigen::VectorXd diag = chol.matrixLLT().diagonal();
    if (!diag.allFinite() || diag.minCoeff() <= 0.0) continue;
    out.chol = std::move(chol);
    out.jitter = jitter;
    out.alpha = out.chol.solve(centered);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < a; ++i) logdet += std::log(diag[i]);
    logdet *= 2.0;
    out.loglik = -0.5 * centered.dot(out.alpha) - 0.5 * logdet -
                 0.5 * static_cast<double>(a) * kLog2Pi;
    if (!std::isfinite(out.loglik)) continue;
    out.ok = true;
    return out;
  }
  return out;
}

void check_training_inputs(std::span<const Coalition> a, const Eigen::VectorXd& u_a) {
  if (a.empty()) throw ConfigError(Errc::bad_parameter, "no training coalitions");
  if (static_cast<Eigen::Index>(a.size()) != u_a.size())
    throw ContractError(Errc::alignment_error, "training coalitions and utilities differ in length");
  if (!u_a.allFinite())
    throw ConfigError(Errc::not_finite, "training utilities contain non-finite values");
}

}  // namespace

HyperGrid HyperGrid::defaults() {
  HyperGrid g;
  g.families = {KernelFamily::ssw_sq_exp, KernelFamily::ssw_l1_exp};
  for (int i = 0; i <= 12; ++i) g.gammas.push_back(std::pow(10.0, -3.0 + 0.5 * i));
  g.sigma2s = {1e-6, 1e-4, 1e-2, 1e-1};
  g.etas = {0.1, 0.3, 0.5, 0.7, 0.9};
  g.rhos = {0.5, 1.0};
  return g;
}

HyperGrid HyperGrid::defaults_for(KernelFamily family) {
  HyperGrid g = defaults();
  g.families = {family};
  return g;
}

void HyperGrid::validate() const {
  if (families.empty() || gammas.empty() || sigma2s.empty() || etas.empty() || rhos.empty())
    throw ConfigError(Errc::empty_grid, "hyperparameter grid has an empty axis");
  for (double gmm : gammas)
    if (!(gmm > 0.0)) throw ConfigError(Errc::bad_parameter, "grid gamma must be > 0");
  for (double s2 : sigma2s)
    if (!(s2 >= 0.0)) throw ConfigError(Errc::bad_parameter, "grid sigma2 must be >= 0");
  for (double e : etas)
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError(Errc::bad_parameter, "grid eta must lie in (0, 1]");
  for (double r : rhos)
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError(Errc::bad_parameter, "grid rho must lie in (0, 1]");
}

GPModel fit_fixed(const KernelSpec& spec, double sigma2, std::span<const Coalition> a,
                  const Eigen::VectorXd& u_a, DistanceProvider& distances) {
  spec.validate();
  check_training_inputs(a, u_a);
  if (!(sigma2 >= 0.0)) throw ConfigError(Errc::bad_parameter, "sigma2 must be >= 0");

  const Eigen::MatrixXd k = build_matrix(spec, a, a, distances).values;
  const double offset = u_a.mean();
  const Eigen::VectorXd centered = u_a.array() - offset;
  FactorizedFit f = factorize(k, sigma2, centered);
  if (!f.ok)
    throw NumericError(Errc::factorization_failure,
                       "kernel matrix not positive definite after the jitter ladder");

  GPModel model;
  model.spec = spec;
  model.noise_var = sigma2;
  model.jitter = f.jitter;
  model.mean_offset = offset;
  model.train.assign(a.begin(), a.end());
  model.utilities = u_a;
  model.chol = std::move(f.chol);
  model.alpha = std::move(f.alpha);
  model.loglik = f.loglik;
  return model;
}

GPModel fit(const HyperGrid& grid, std::span<const Coalition> a, const Eigen::VectorXd& u_a,
            DistanceProvider& distances, int threads) {
  grid.validate();
  check_training_inputs(a, u_a);
  if (a.size() < 2)
    throw ConfigError(Errc::bad_parameter, "hyperparameter search needs at least 2 evaluations");

  struct Candidate {
    KernelFamily family;
    double eta, rho, gamma, sigma2;
    std::size_t dist_index;  // into the shared raw-distance matrices
  };
  // One raw-distance matrix per (family-kind, eta); candidates only differ
  // in cheap elementwise math on top of it.
  std::vector<std::pair<DistanceKind, double>> dist_specs;
  std::vector<Candidate> candidates;
  for (KernelFamily family : grid.families) {
    const DistanceKind kind = distance_kind_of(family);
    const bool supervised =
        family == KernelFamily::ssw_sq_exp || family == KernelFamily::ssw_l1_exp;
    const std::vector<double> etas = supervised ? grid.etas : std::vector<double>{1.0};
    const std::vector<double> rhos =
        family == KernelFamily::binary_rbf ? std::vector<double>{1.0} : grid.rhos;
    for (double eta : etas) {
      std::size_t dist_index = dist_specs.size();
      for (std::size_t i = 0; i < dist_specs.size(); ++i)
        if (dist_specs[i].first == kind && dist_specs[i].second == eta) dist_index = i;
      if (dist_index == dist_specs.size()) dist_specs.emplace_back(kind, eta);
      for (double rho : rhos)
        for (double gamma : grid.gammas)
          for (double sigma2 : grid.sigma2s)
            candidates.push_back({family, eta, rho, gamma, sigma2, dist_index});
    }
  }

  const Eigen::Index n = static_cast<Eigen::Index>(a.size());
  std::vector<Eigen::MatrixXd> dist_matrices(dist_specs.size());
  for (std::size_t d = 0; d < dist_specs.size(); ++d) {
    const auto [kind, eta] = dist_specs[d];
    distances.prepare(a, kind, eta);
    Eigen::MatrixXd& mat = dist_matrices[d];
    mat = Eigen::MatrixXd::Zero(n, n);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    parallel_for(pairs.size(), threads, [&](std::size_t p) {
      const auto [i, j] = pairs[p];
      mat(i, j) = distances.distance(kind, a[static_cast<std::size_t>(i)],
                                     a[static_cast<std::size_t>(j)], eta);
    });
    mat = Eigen::MatrixXd(mat.selfadjointView<Eigen::Upper>());
  }

  const double offset = u_a.mean();
  const Eigen::VectorXd centered = u_a.array() - offset;

  std::vector<double> logliks(candidates.size(), -std::numeric_limits<double>::infinity());
  parallel_for(candidates.size(), threads, [&](std::size_t ci) {
    const Candidate& c = candidates[ci];
    const Eigen::MatrixXd& raw = dist_matrices[c.dist_index];
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        k(i, j) = apply_kernel(raw(i, j), c.family, c.gamma, c.rho);
    const FactorizedFit f = factorize(k, c.sigma2, centered);
    if (f.ok) logliks[ci] = f.loglik;
  });

  std::ptrdiff_t best = -1;
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    if (!std::isfinite(logliks[ci])) continue;
    if (best < 0) {
      best = static_cast<std::ptrdiff_t>(ci);
      continue;
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(logliks[static_cast<std::size_t>(best)]));
    const double delta = logliks[ci] - logliks[static_cast<std::size_t>(best)];
    if (delta > tol ||
        (delta > -tol && candidates[ci].sigma2 > candidates[static_cast<std::size_t>(best)].sigma2))
      best = static_cast<std::ptrdiff_t>(ci);
  }
  if (best < 0)
    throw NumericError(Errc::factorization_failure,
                       "every grid candidate failed to factorize");

  const Candidate& win = candidates[static_cast<std::size_t>(best)];
  KernelSpec spec;
  spec.family = win.family;
  spec.gamma = win.gamma;
  spec.eta = win.eta;
  spec.sw.rho = win.rho;
  spec.sw.projections = distances.projections();
  spec.sw.seed = distances.seed();
  spec.sw.p = win.family == KernelFamily::ssw_l1_exp ? 1 : 2;
  return fit_fixed(spec, win.sigma2, a, u_a, distances);
}

Posterior predict(const GPModel& model, std::span<const Coalition> b, DistanceProvider& distances,
                  int threads) {
  Posterior post;
  post.coalitions.assign(b.begin(), b.end());
  if (b.empty()) {
    post.mean.resize(0);
    post.cov.resize(0, 0);
    return post;
  }
  const Eigen::MatrixXd k_ba =
      build_matrix(model.spec, b, model.train, distances, threads).values;  // b x a
  const Eigen::MatrixXd k_bb = build_matrix(model.spec, b, b, distances, threads).values;

  post.mean = (k_ba * model.alpha).array() + model.mean_offset;
  // V = K_BB - K_BA (K_AA + s I)^{-1} K_AB via one triangular solve.
  const Eigen::MatrixXd t = model.chol.matrixL().solve(k_ba.transpose());  // a x b
  Eigen::MatrixXd cov = k_bb - t.transpose() * t;
  cov = 0.5 * (cov + cov.transpose());
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    if (cov(i, i) < -1e-10)
      throw NumericError(Errc::negative_variance,
                         "posterior variance " + std::to_string(cov(i, i)) + " below clamp for " +
                             post.coalitions[static_cast<std::size_t>(i)].to_string());
    if (cov(i, i) < 0.0) cov(i, i) = 0.0;
  }
  post.cov = std::move(cov);
  return post;
}

double log_marginal_likelihood(const GPModel& model) { return model.loglik; }

}  // namespace coval

#include "support/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace oracle {

namespace {

// Depth-first over the cells of the flow matrix in row-major order; at each
// cell try every feasible integer flow.  Rows must be exactly exhausted when
// their last column is passed, and all demands must reach zero at the end.
void enumerate_flows(const Eigen::MatrixXd& cost, std::vector<long long>& supply,
                     std::vector<long long>& demand, std::size_t i, std::size_t j, double acc,
                     double& best) {
  if (acc >= best) return;
  const std::size_t rows = supply.size();
  const std::size_t cols = demand.size();
  if (i == rows) {
    for (long long rem : demand)
      if (rem != 0) return;
    best = acc;
    return;
  }
  if (j == cols) {
    if (supply[i] != 0) return;
    enumerate_flows(cost, supply, demand, i + 1, 0, acc, best);
    return;
  }
  const long long cap = std::min(supply[i], demand[j]);
  for (long long f = cap; f >= 0; --f) {  // large flows first: finds a bound sooner
    supply[i] -= f;
    demand[j] -= f;
    enumerate_flows(cost, supply, demand, i, j + 1,
                    acc + static_cast<double>(f) * cost(static_cast<Eigen::Index>(i),
                                                        static_cast<Eigen::Index>(j)),
                    best);
    supply[i] += f;
    demand[j] += f;
  }
}

}  // namespace

double min_cost_flow_bruteforce(const Eigen::MatrixXd& cost, std::span<const long long> supply,
                                std::span<const long long> demand) {
  if (cost.rows() != static_cast<Eigen::Index>(supply.size()) ||
      cost.cols() != static_cast<Eigen::Index>(demand.size()))
    throw std::invalid_argument("cost matrix does not match the margins");
  const long long total_s = std::accumulate(supply.begin(), supply.end(), 0ll);
  const long long total_d = std::accumulate(demand.begin(), demand.end(), 0ll);
  if (total_s != total_d) throw std::invalid_argument("supply and demand totals differ");
  std::vector<long long> s(supply.begin(), supply.end());
  std::vector<long long> d(demand.begin(), demand.end());
  double best = std::numeric_limits<double>::infinity();
  enumerate_flows(cost, s, d, 0, 0, 0.0, best);
  return best;
}

double wasserstein_1d_lp(std::vector<double> a, std::vector<double> b, int p) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty sample");
  const long long na = static_cast<long long>(a.size());
  const long long nb = static_cast<long long>(b.size());
  const long long scale = std::lcm(na, nb);
  Eigen::MatrixXd cost(na, nb);
  for (long long i = 0; i < na; ++i)
    for (long long j = 0; j < nb; ++j) {
      const double diff = std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)]);
      cost(i, j) = p == 1 ? diff : diff * diff;
    }
  std::vector<long long> supply(static_cast<std::size_t>(na), scale / na);
  std::vector<long long> demand(static_cast<std::size_t>(nb), scale / nb);
  const double integral = min_cost_flow_bruteforce(cost, supply, demand) / static_cast<double>(scale);
  return p == 1 ? integral : std::sqrt(integral);
}

Eigen::VectorXd semivalue_double_sum(const std::function<double(std::uint64_t)>& u, int n,
                                     std::span<const double> omega) {
  if (n < 1 || n > 20) throw std::invalid_argument("double-sum oracle supports 1..20 owners");
  if (omega.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("omega must have one entry per coalition size 0..n-1");
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  auto value = [&](std::uint64_t mask) { return mask == 0 ? 0.0 : u(mask); };
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    for (std::uint64_t mask = 0; mask <= full; ++mask) {
      if (mask & bit) continue;
      const int c = std::popcount(mask);
      phi[i] += omega[static_cast<std::size_t>(c)] * (value(mask | bit) - value(mask));
    }
  }
  return phi;
}

namespace {

double exact_binomial(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * static_cast<double>(n - k + i) / static_cast<double>(i);
  return out;
}

}  // namespace

Eigen::VectorXd shapley_double_sum(const std::function<double(std::uint64_t)>& u, int n) {
  std::vector<double> omega(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c)
    omega[static_cast<std::size_t>(c)] = 1.0 / (static_cast<double>(n) * exact_binomial(n - 1, c));
  return semivalue_double_sum(u, n, omega);
}

Eigen::VectorXd banzhaf_double_sum(const std::function<double(std::uint64_t)>& u, int n) {
  std::vector<double> omega(static_cast<std::size_t>(n),
                            1.0 / static_cast<double>(std::uint64_t{1} << (n - 1)));
  return semivalue_double_sum(u, n, omega);
}

DensePosterior dense_gp_posterior(const Eigen::MatrixXd& k_aa, const Eigen::MatrixXd& k_ba,
                                  const Eigen::MatrixXd& k_bb, const Eigen::VectorXd& u_a,
                                  double noise_plus_jitter, double mean_offset) {
  Eigen::MatrixXd m = k_aa;
  m.diagonal().array() += noise_plus_jitter;
  const Eigen::MatrixXd m_inv = m.inverse();
  const Eigen::VectorXd centered = u_a.array() - mean_offset;
  DensePosterior post;
  post.mean = (k_ba * (m_inv * centered)).array() + mean_offset;
  Eigen::MatrixXd cov = k_bb - k_ba * m_inv * k_ba.transpose();
  cov = 0.5 * (cov + cov.transpose());
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    if (cov(i, i) < 0.0 && cov(i, i) >= -1e-10) cov(i, i) = 0.0;
  post.cov = std::move(cov);
  return post;
}

std::vector<coval::Coalition> dense_greedy(const coval::GPModel& model,
                                           std::span<const coval::Coalition> pool,
                                           const Eigen::VectorXd& pool_weight, int budget,
                                           coval::DistanceProvider& distances) {
  const std::size_t a = model.train.size();
  const std::size_t b = pool.size();
  std::vector<coval::Coalition> universe(model.train.begin(), model.train.end());
  universe.insert(universe.end(), pool.begin(), pool.end());
  const Eigen::MatrixXd k_all =
      coval::build_matrix(model.spec, universe, universe, distances).values;
  const double noisy_diag = 1.0 + model.noise_var + model.jitter;

  std::vector<std::size_t> cond(a);
  for (std::size_t i = 0; i < a; ++i) cond[i] = i;
  std::vector<bool> taken(b, false);
  std::vector<coval::Coalition> chosen;

  for (int pick = 0; pick < budget; ++pick) {
    std::size_t best = b;
    double best_vr = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b; ++j) {
      if (taken[j]) continue;
      std::vector<std::size_t> grown = cond;
      grown.push_back(a + j);
      const auto k = static_cast<Eigen::Index>(grown.size());
      Eigen::MatrixXd m(k, k);
      Eigen::VectorXd q(k);
      for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = 0; c < k; ++c)
          m(r, c) = r == c ? noisy_diag
                           : k_all(static_cast<Eigen::Index>(grown[static_cast<std::size_t>(r)]),
                                   static_cast<Eigen::Index>(grown[static_cast<std::size_t>(c)]));
        double s = 0.0;
        for (std::size_t col = 0; col < b; ++col)
          s += k_all(static_cast<Eigen::Index>(grown[static_cast<std::size_t>(r)]),
                     static_cast<Eigen::Index>(a + col)) *
               pool_weight[static_cast<Eigen::Index>(col)];
        q[r] = s;
      }
      const double vr = q.dot(m.inverse() * q);
      if (vr > best_vr) {
        best_vr = vr;
        best = j;
      }
    }
    if (best == b) throw std::runtime_error("dense greedy ran out of candidates");
    taken[best] = true;
    cond.push_back(a + best);
    chosen.push_back(pool[best]);
  }
  return chosen;
}

Eigen::VectorXd gaussian_sample(const Eigen::MatrixXd& k, double mean, double noise,
                                std::uint64_t seed) {
  if (k.rows() != k.cols()) throw std::invalid_argument("covariance must be square");
  Eigen::MatrixXd cov = k;
  cov.diagonal().array() += noise;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  coval::Rng rng(seed);
  Eigen::VectorXd z(k.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
  return (root * z).array() + mean;
}

std::unordered_map<std::uint64_t, double> random_table_game(int n, std::uint64_t seed) {
  coval::Rng rng(seed);
  std::unordered_map<std::uint64_t, double> game;
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  for (std::uint64_t mask = 1; mask <= full; ++mask) game[mask] = rng.uniform();
  return game;
}

std::vector<coval::Coalition> all_nonempty(int n) {
  std::vector<coval::Coalition> out;
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  out.reserve(full);
  for (std::uint64_t mask = 1; mask <= full; ++mask) out.emplace_back(mask);
  return out;
}

std::function<double(std::uint64_t)> table_fn(
    const std::unordered_map<std::uint64_t, double>& game) {
  return [&game](std::uint64_t mask) { return mask == 0 ? 0.0 : game.at(mask); };
}

}  // namespace oracle

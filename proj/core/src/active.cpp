#include "coval/active.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace coval {

Eigen::MatrixXd incremental_inverse(const Eigen::MatrixXd& inv_prev, const Eigen::VectorXd& new_row,
                                    double new_diag, double min_schur) {
  const Eigen::Index k = inv_prev.rows();
  if (inv_prev.cols() != k)
    throw ContractError(Errc::non_square, "previous inverse must be square");
  if (new_row.size() != k)
    throw ContractError(Errc::dimension_mismatch, "new row length does not match the inverse");

  Eigen::MatrixXd out(k + 1, k + 1);
  if (k == 0) {
    if (new_diag <= min_schur)
      throw NumericError(Errc::factorization_failure,
                         "degenerate Schur complement: " + std::to_string(new_diag));
    out(0, 0) = 1.0 / new_diag;
    return out;
  }
  const Eigen::VectorXd u = inv_prev * new_row;
  const double schur = new_diag - new_row.dot(u);
  if (schur <= min_schur)
    throw NumericError(Errc::factorization_failure,
                       "degenerate Schur complement: " + std::to_string(schur));
  out.topLeftCorner(k, k) = inv_prev + (u * u.transpose()) / schur;
  out.topRightCorner(k, 1) = -u / schur;
  out.bottomLeftCorner(1, k) = -u.transpose() / schur;
  out(k, k) = 1.0 / schur;
  return out;
}

WeightVector aggregate_weight(std::span<const WeightVector> per_owner) {
  if (per_owner.empty())
    throw ContractError(Errc::alignment_error, "no weight vectors to aggregate");
  const auto& first = per_owner.front();
  for (const auto& w : per_owner) {
    if (w.coalitions.size() != first.coalitions.size() ||
        static_cast<std::size_t>(w.weights.size()) != w.coalitions.size())
      throw ContractError(Errc::alignment_error, "weight vectors differ in length");
    for (std::size_t j = 0; j < w.coalitions.size(); ++j)
      if (w.coalitions[j] != first.coalitions[j])
        throw ContractError(Errc::alignment_error,
                            "weight vectors list different coalitions at index " + std::to_string(j));
  }
  WeightVector out;
  out.owner = -1;
  out.coalitions = first.coalitions;
  out.weights = Eigen::VectorXd::Zero(first.weights.size());
  for (const auto& w : per_owner) out.weights.array() += w.weights.array().square();
  out.weights = out.weights.array().sqrt();
  return out;
}

SelectionResult greedy_select(const GPModel& model, std::span<const Coalition> pool,
                              const Eigen::VectorXd& pool_weight, int budget,
                              DistanceProvider& distances, int threads) {
  const std::size_t b = pool.size();
  if (static_cast<Eigen::Index>(b) != pool_weight.size())
    throw ContractError(Errc::alignment_error, "pool weight length does not match the pool");
  if (budget < 0 || static_cast<std::size_t>(budget) > b)
    throw ConfigError(Errc::budget_exceeds_pool,
                      "selection budget " + std::to_string(budget) + " exceeds the pool of " +
                          std::to_string(b));
  SelectionResult result;
  if (budget == 0) return result;

  // Kernel values over A + pool, computed once; the greedy loop is pure
  // linear algebra afterwards.
  std::vector<Coalition> universe(model.train.begin(), model.train.end());
  universe.insert(universe.end(), pool.begin(), pool.end());
  const Eigen::MatrixXd k_all = build_matrix(model.spec, universe, universe, distances, threads).values;
  const std::size_t a = model.train.size();
  const double noisy_diag = 1.0 + model.noise_var + model.jitter;  // k(G,G) = 1 for all families

  // Conditioning set S as indices into `universe`; starts as A.
  std::vector<std::size_t> cond(a);
  for (std::size_t i = 0; i < a; ++i) cond[i] = i;

  auto refactorize = [&](const std::vector<std::size_t>& s) -> Eigen::MatrixXd {
    Eigen::MatrixXd m(s.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            i == j ? noisy_diag : k_all(static_cast<Eigen::Index>(s[i]), static_cast<Eigen::Index>(s[j]));
    Eigen::LLT<Eigen::MatrixXd> chol(m);
    if (chol.info() != Eigen::Success)
      throw NumericError(Errc::factorization_failure,
                         "selection conditioning matrix lost positive definiteness");
    return chol.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(s.size()),
                                                static_cast<Eigen::Index>(s.size())));
  };
  Eigen::MatrixXd inv = refactorize(cond);

  // v = K_{S,B} w, maintained as S grows.  k_all's diagonal is the pure
  // kernel value 1, so duplicate coalitions need no special casing here.
  auto weighted_column = [&](std::size_t universe_index) {
    double s = 0.0;
    for (std::size_t j = 0; j < b; ++j)
      s += k_all(static_cast<Eigen::Index>(universe_index), static_cast<Eigen::Index>(a + j)) *
           pool_weight[static_cast<Eigen::Index>(j)];
    return s;
  };
  Eigen::VectorXd v(a);
  for (std::size_t i = 0; i < a; ++i) v[static_cast<Eigen::Index>(i)] = weighted_column(i);

  std::vector<bool> taken(b, false);
  int since_refactor = 0;
  for (int pick = 0; pick < budget; ++pick) {
    const double base = v.dot(inv * v);
    // Score every remaining candidate: VR = base + (u'v - s)^2 / schur.
    std::vector<double> gain(b, -1.0);
    std::vector<std::size_t> remaining;
    for (std::size_t j = 0; j < b; ++j)
      if (!taken[j]) remaining.push_back(j);
    parallel_for(remaining.size(), threads, [&](std::size_t ri) {
      const std::size_t j = remaining[ri];
      Eigen::VectorXd r(cond.size());
      for (std::size_t i = 0; i < cond.size(); ++i)
        r[static_cast<Eigen::Index>(i)] = k_all(static_cast<Eigen::Index>(cond[i]),
                                                static_cast<Eigen::Index>(a + j));
      const Eigen::VectorXd u = inv * r;
      const double schur = noisy_diag - r.dot(u);
      if (schur <= 1e-12) {
        gain[j] = 0.0;  // candidate adds (numerically) no new information
        return;
      }
      const double s = weighted_column(a + j);
      const double delta = u.dot(v) - s;
      gain[j] = delta * delta / schur;
    });

    std::size_t best = b;
    double best_gain = -1.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (taken[j]) continue;
      if (gain[j] > best_gain) {  // strict: ties keep the earliest index
        best_gain = gain[j];
        best = j;
      }
    }
    if (best == b)
      throw ContractError(Errc::budget_exceeds_pool, "no candidate left to select");

    // Accept the pick and grow the inverse.
    Eigen::VectorXd r(cond.size());
    for (std::size_t i = 0; i < cond.size(); ++i)
      r[static_cast<Eigen::Index>(i)] = k_all(static_cast<Eigen::Index>(cond[i]),
                                              static_cast<Eigen::Index>(a + best));
    taken[best] = true;
    cond.push_back(a + best);
    ++since_refactor;
    if (since_refactor >= 16) {
      inv = refactorize(cond);
      since_refactor = 0;
    } else {
      try {
        inv = incremental_inverse(inv, r, noisy_diag);
      } catch (const NumericError&) {
        inv = refactorize(cond);
        since_refactor = 0;
      }
    }
    v.conservativeResize(v.size() + 1);
    v[v.size() - 1] = weighted_column(a + best);

    result.chosen.push_back(pool[best]);
    result.objective_trace.push_back(v.dot(inv * v));
  }
  return result;
}

}  // namespace coval

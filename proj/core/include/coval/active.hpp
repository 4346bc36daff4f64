#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "coval/gp.hpp"
#include "coval/semivalue.hpp"

namespace coval {

// Grows the inverse of a PD matrix by one row/column via the Schur
// complement S = new_diag - row' inv_prev row:
//   [ A  b ]^{-1}  =  [ A^{-1} + u u' / S   -u / S ]      u = A^{-1} b
//   [ b' d ]          [      -u' / S         1 / S ]
// Throws DegenerateSchur (NumericError) when S <= min_schur, in which case
// the caller should refactorize from scratch.
Eigen::MatrixXd incremental_inverse(const Eigen::MatrixXd& inv_prev, const Eigen::VectorXd& new_row,
                                    double new_diag, double min_schur = 1e-12);

// Root-sum-square combination of per-owner weight vectors into one
// non-negative objective weight per coalition, so the selection objective
// upper-bounds every owner's variance term.  All vectors must list the same
// coalitions in the same order.
WeightVector aggregate_weight(std::span<const WeightVector> per_owner);

struct SelectionResult {
  std::vector<Coalition> chosen;        // in pick order
  std::vector<double> objective_trace;  // weighted variance-reduction after each pick
};

// Greedy maximization of VR(G) = w' K_{B,S+G} (K_{S+G,S+G} + sigma^2 I)^{-1}
// K_{S+G,B} w over candidates G in `pool`, where S starts as the model's
// training set and grows with each pick.  Ties keep the earliest candidate.
// The inverse is grown incrementally and refactorized every 16 picks (or on
// a degenerate Schur complement).
SelectionResult greedy_select(const GPModel& model, std::span<const Coalition> pool,
                              const Eigen::VectorXd& pool_weight, int budget,
                              DistanceProvider& distances, int threads = 0);

}  // namespace coval

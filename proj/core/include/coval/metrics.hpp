#pragma once

#include <Eigen/Core>

namespace coval {

// Agreement measures between a reference value vector and an estimate.
// All three throw on misaligned inputs; pearson additionally rejects
// constant inputs, where the correlation is undefined.

double mean_squared_error(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate);

double pearson_correlation(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate);

// Kendall's tau-a: (concordant - discordant) / C(n, 2); ties count for neither.
double kendall_tau(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate);

}  // namespace coval

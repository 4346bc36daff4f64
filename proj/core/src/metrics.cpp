#include "coval/metrics.hpp"

#include <cmath>

#include "coval/common.hpp"

namespace coval {

namespace {

void check_pair(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate,
                Eigen::Index min_size) {
  if (reference.size() != estimate.size())
    throw ContractError(Errc::dimension_mismatch, "metric inputs have different lengths");
  if (reference.size() < min_size)
    throw ContractError(Errc::bad_parameter, "metric inputs are too short");
}

}  // namespace

double mean_squared_error(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate) {
  check_pair(reference, estimate, 1);
  return (reference - estimate).squaredNorm() / static_cast<double>(reference.size());
}

double pearson_correlation(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate) {
  check_pair(reference, estimate, 2);
  const Eigen::ArrayXd a = reference.array() - reference.mean();
  const Eigen::ArrayXd b = estimate.array() - estimate.mean();
  const double denom = std::sqrt(a.square().sum() * b.square().sum());
  if (denom == 0.0)
    throw NumericError(Errc::constant_target,
                       "pearson correlation is undefined when either input is constant");
  return (a * b).sum() / denom;
}

double kendall_tau(const Eigen::VectorXd& reference, const Eigen::VectorXd& estimate) {
  check_pair(reference, estimate, 2);
  const Eigen::Index n = reference.size();
  long long concordant = 0;
  long long discordant = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dr = reference[i] - reference[j];
      const double de = estimate[i] - estimate[j];
      const double prod = dr * de;
      if (prod > 0.0)
        ++concordant;
      else if (prod < 0.0)
        ++discordant;
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return static_cast<double>(concordant - discordant) / pairs;
}

}  // namespace coval

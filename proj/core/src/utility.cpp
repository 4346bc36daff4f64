#include "coval/utility.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace coval {

namespace {

void check_validation(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, Task task) {
  if (features.rows() == 0 || features.rows() != targets.size())
    throw ConfigError(Errc::bad_parameter, "validation set is empty or misaligned");
  if (!features.allFinite() || !targets.allFinite())
    throw ConfigError(Errc::not_finite, "validation set contains non-finite values");
  if (task == Task::classification) {
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      if (targets[i] < 0 || targets[i] != std::floor(targets[i]))
        throw ConfigError(Errc::unknown_class, "validation labels must be non-negative integers");
    }
  } else {
    const double spread = targets.maxCoeff() - targets.minCoeff();
    if (spread == 0.0)
      throw ConfigError(Errc::constant_target,
                        "validation targets are constant; R^2 is undefined");
  }
}

int majority_label(const std::vector<int>& votes) {
  // Smallest label wins ties, so the answer never depends on vote order.
  std::unordered_map<int, int> counts;
  for (int v : votes) ++counts[v];
  int best_label = votes.front();
  int best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count || (count == best_count && label < best_label)) {
      best_label = label;
      best_count = count;
    }
  }
  return best_label;
}

}  // namespace

UtilityFn UtilityFn::knn_accuracy(int k, Eigen::MatrixXd val_features,
                                  Eigen::VectorXd val_labels) {
  if (k < 1) throw ConfigError(Errc::bad_parameter, "knn utility needs k >= 1");
  check_validation(val_features, val_labels, Task::classification);
  UtilityFn fn;
  fn.kind_ = Kind::knn;
  fn.k_ = k;
  fn.val_features_ = std::move(val_features);
  fn.val_targets_ = std::move(val_labels);
  return fn;
}

UtilityFn UtilityFn::ridge_r2(double lambda, Eigen::MatrixXd val_features,
                              Eigen::VectorXd val_targets) {
  if (lambda < 0.0 || !std::isfinite(lambda))
    throw ConfigError(Errc::bad_parameter, "ridge utility needs lambda >= 0");
  check_validation(val_features, val_targets, Task::regression);
  UtilityFn fn;
  fn.kind_ = Kind::ridge;
  fn.lambda_ = lambda;
  fn.val_features_ = std::move(val_features);
  fn.val_targets_ = std::move(val_targets);
  return fn;
}

UtilityFn UtilityFn::logistic_accuracy(Eigen::MatrixXd val_features, Eigen::VectorXd val_labels,
                                       int steps, double learning_rate) {
  if (steps < 1 || learning_rate <= 0.0)
    throw ConfigError(Errc::bad_parameter, "logistic utility needs steps >= 1 and a positive rate");
  check_validation(val_features, val_labels, Task::classification);
  UtilityFn fn;
  fn.kind_ = Kind::logistic;
  fn.steps_ = steps;
  fn.lr_ = learning_rate;
  fn.val_features_ = std::move(val_features);
  fn.val_targets_ = std::move(val_labels);
  return fn;
}

UtilityFn UtilityFn::table(std::unordered_map<std::uint64_t, double> values) {
  for (const auto& [bits, value] : values) {
    if (!std::isfinite(value))
      throw ConfigError(Errc::not_finite, "table utility contains a non-finite value");
    (void)bits;
  }
  UtilityFn fn;
  fn.kind_ = Kind::table;
  fn.table_ = std::move(values);
  return fn;
}

UtilityFn::Outcome UtilityFn::evaluate_detailed(Coalition c,
                                                const std::vector<OwnerDataset>& owners) const {
  if (c.empty()) return {0.0, false};
  if (kind_ == Kind::table) {
    auto it = table_.find(c.bits());
    if (it == table_.end())
      throw ConfigError(Errc::missing_prefix,
                        "table utility has no entry for coalition " + c.to_string());
    return {it->second, false};
  }
  const AggregatedDataset train = aggregate(owners, c);
  if (train.features.cols() != val_features_.cols())
    throw ContractError(Errc::dimension_mismatch,
                        "training and validation feature dimensions differ");
  switch (kind_) {
    case Kind::knn:
      return eval_knn(train);
    case Kind::ridge:
      return eval_ridge(train);
    case Kind::logistic:
      return eval_logistic(train);
    default:
      throw ContractError(Errc::bad_parameter, "unreachable utility kind");
  }
}

UtilityFn::Outcome UtilityFn::eval_knn(const AggregatedDataset& train) const {
  const Eigen::Index rows = train.features.rows();
  const int k_eff = static_cast<int>(std::min<Eigen::Index>(k_, rows));
  Eigen::Index correct = 0;
  std::vector<std::pair<double, Eigen::Index>> order(static_cast<std::size_t>(rows));
  for (Eigen::Index v = 0; v < val_features_.rows(); ++v) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double d2 = (train.features.row(i) - val_features_.row(v)).squaredNorm();
      order[static_cast<std::size_t>(i)] = {d2, i};
    }
    // Ties on distance fall back to row index, keeping the vote deterministic.
    std::partial_sort(order.begin(), order.begin() + k_eff, order.end());
    std::vector<int> votes;
    votes.reserve(static_cast<std::size_t>(k_eff));
    for (int j = 0; j < k_eff; ++j)
      votes.push_back(static_cast<int>(train.targets[order[static_cast<std::size_t>(j)].second]));
    if (majority_label(votes) == static_cast<int>(val_targets_[v])) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(val_features_.rows()), false};
}

UtilityFn::Outcome UtilityFn::eval_ridge(const AggregatedDataset& train) const {
  const Eigen::Index n = train.features.rows();
  const Eigen::Index m = train.features.cols();
  // Centering absorbs the intercept, which then stays unpenalized.
  const Eigen::RowVectorXd x_mean = train.features.colwise().mean();
  const double y_mean = train.targets.mean();
  const Eigen::MatrixXd xc = train.features.rowwise() - x_mean;
  const Eigen::VectorXd yc = train.targets.array() - y_mean;

  Eigen::VectorXd beta;
  if (lambda_ > 0.0) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda_;
    beta = gram.llt().solve(xc.transpose() * yc);
  } else {
    // Unregularized least squares; rank-deficient designs get the
    // minimum-norm-style pivoted solution instead of a blow-up.
    beta = xc.colPivHouseholderQr().solve(yc);
  }
  if (!beta.allFinite()) return {0.0, true};
  (void)n;
  (void)m;
  const Eigen::VectorXd pred =
      ((val_features_.rowwise() - x_mean) * beta).array() + y_mean;
  double r2;
  try {
    r2 = r2_score(val_targets_, pred);
  } catch (const Error&) {
    return {0.0, true};
  }
  return {r2, false};
}

UtilityFn::Outcome UtilityFn::eval_logistic(const AggregatedDataset& train) const {
  const Eigen::Index n = train.features.rows();
  const Eigen::Index m = train.features.cols();
  std::set<int> seen;
  int max_label = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(train.targets[i]);
    seen.insert(label);
    max_label = std::max(max_label, label);
  }
  for (Eigen::Index v = 0; v < val_targets_.size(); ++v)
    max_label = std::max(max_label, static_cast<int>(val_targets_[v]));
  const int classes = max_label + 1;
  if (seen.size() < 2) {
    // One-class training data: predict that class everywhere.
    const int only = *seen.begin();
    Eigen::Index correct = 0;
    for (Eigen::Index v = 0; v < val_targets_.size(); ++v)
      if (static_cast<int>(val_targets_[v]) == only) ++correct;
    return {static_cast<double>(correct) / static_cast<double>(val_targets_.size()), true};
  }

  // Full-batch softmax regression from a zero start; the fixed step count
  // makes the utility a pure function of the coalition.
  Eigen::MatrixXd x(n, m + 1);
  x.leftCols(m) = train.features;
  x.col(m).setOnes();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) y(i, static_cast<int>(train.targets[i])) = 1.0;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m + 1, classes);
  const double scale = lr_ / static_cast<double>(n);
  for (int step = 0; step < steps_; ++step) {
    Eigen::MatrixXd logits = x * w;
    const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    logits.colwise() -= row_max;
    Eigen::MatrixXd p = logits.array().exp();
    const Eigen::VectorXd z = p.rowwise().sum();
    p.array().colwise() /= z.array();
    w -= scale * (x.transpose() * (p - y));
  }
  if (!w.allFinite()) return {0.0, true};

  Eigen::Index correct = 0;
  for (Eigen::Index v = 0; v < val_features_.rows(); ++v) {
    Eigen::VectorXd logits =
        w.topRows(m).transpose() * val_features_.row(v).transpose() + w.row(m).transpose();
    int best = 0;
    for (int cls = 1; cls < classes; ++cls)
      if (logits[cls] > logits[best]) best = cls;  // strict > keeps the smallest class on ties
    if (best == static_cast<int>(val_targets_[v])) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(val_features_.rows()), false};
}

double evaluate(const UtilityFn& fn, Coalition c, const std::vector<OwnerDataset>& owners) {
  return fn(c, owners);
}

double evaluate_cached(const UtilityFn& fn, Coalition c, const std::vector<OwnerDataset>& owners,
                       EvaluationLedger& ledger) {
  if (auto hit = ledger.find(c); hit && hit->source == Source::actual) return hit->utility;
  const double value = fn(c, owners);
  ledger.record(c, value, Source::actual);
  return value;
}

double r2_score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.size() == 0)
    throw ContractError(Errc::dimension_mismatch, "r2_score inputs are misaligned");
  const double mean = y_true.mean();
  const double ss_tot = (y_true.array() - mean).square().sum();
  if (ss_tot == 0.0)
    throw NumericError(Errc::constant_target, "r2_score is undefined for a constant target");
  const double ss_res = (y_true - y_pred).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

}  // namespace coval

#pragma once

#include <Eigen/Core>
#include <unordered_map>
#include <vector>

#include "coval/dataset.hpp"
#include "coval/semivalue.hpp"

namespace coval {

// A desk-scale stand-in for "train the model on D_C and score it": k-NN or
// logistic accuracy on a validation set, ridge R^2, or a precomputed table
// for synthetic games.  Deterministic by construction — no RNG anywhere.
class UtilityFn {
public:
  enum class Kind { knn, ridge, logistic, table };

  static UtilityFn knn_accuracy(int k, Eigen::MatrixXd val_features, Eigen::VectorXd val_labels);
  static UtilityFn ridge_r2(double lambda, Eigen::MatrixXd val_features,
                            Eigen::VectorXd val_targets);
  static UtilityFn logistic_accuracy(Eigen::MatrixXd val_features, Eigen::VectorXd val_labels,
                                     int steps = 500, double learning_rate = 0.1);
  static UtilityFn table(std::unordered_map<std::uint64_t, double> values);

  Kind kind() const { return kind_; }
  Task task() const { return kind_ == Kind::ridge ? Task::regression : Task::classification; }
  bool needs_owners() const { return kind_ != Kind::table; }

  struct Outcome {
    double value = 0.0;
    bool degenerate = false;  // training collapsed (e.g. one class); value is the floor
  };
  Outcome evaluate_detailed(Coalition c, const std::vector<OwnerDataset>& owners) const;
  double operator()(Coalition c, const std::vector<OwnerDataset>& owners) const {
    return evaluate_detailed(c, owners).value;
  }

private:
  UtilityFn() = default;
  Kind kind_ = Kind::table;
  int k_ = 5;
  double lambda_ = 1e-3;
  int steps_ = 500;
  double lr_ = 0.1;
  Eigen::MatrixXd val_features_;
  Eigen::VectorXd val_targets_;
  std::unordered_map<std::uint64_t, double> table_;

  Outcome eval_knn(const AggregatedDataset& train) const;
  Outcome eval_ridge(const AggregatedDataset& train) const;
  Outcome eval_logistic(const AggregatedDataset& train) const;
};

double evaluate(const UtilityFn& fn, Coalition c, const std::vector<OwnerDataset>& owners);

// Ledger-backed evaluation: a second call for the same coalition is a lookup,
// not a retraining.  Records source = actual.
double evaluate_cached(const UtilityFn& fn, Coalition c, const std::vector<OwnerDataset>& owners,
                       EvaluationLedger& ledger);

// 1 - sum (y - yhat)^2 / sum (y - mean)^2; y_true must not be constant.
double r2_score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

}  // namespace coval

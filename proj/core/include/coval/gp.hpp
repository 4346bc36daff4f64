#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <span>
#include <vector>

#include "coval/kernel.hpp"

namespace coval {

// Hyperparameter search space for fit().  Every combination of the axes that
// applies to a family is tried; axes a family ignores (eta/rho for
// binary_rbf) collapse to a single placeholder value.
struct HyperGrid {
  std::vector<KernelFamily> families;
  std::vector<double> gammas;
  std::vector<double> sigma2s;
  std::vector<double> etas;
  std::vector<double> rhos;

  // Both supervised families, gamma log-spaced 1e-3..1e3 (13 points),
  // sigma2 in {1e-6, 1e-4, 1e-2, 1e-1}, eta in {.1,.3,.5,.7,.9},
  // rho in {.5, 1}.
  static HyperGrid defaults();
  // Same numeric axes but restricted to one family.
  static HyperGrid defaults_for(KernelFamily family);

  void validate() const;
};

// A fitted zero-mean GP over centered utilities: the model regresses
// u - mean(u_train) and predict() adds the offset back.
struct GPModel {
  KernelSpec spec;
  double noise_var = 0.0;            // selected sigma^2
  double jitter = 0.0;               // extra diagonal needed by the factorization
  double mean_offset = 0.0;          // empirical mean of the training utilities
  std::vector<Coalition> train;      // the evaluated coalitions (A)
  Eigen::VectorXd utilities;         // raw u_A (uncentered)
  Eigen::LLT<Eigen::MatrixXd> chol;  // LL^T = K_AA + (sigma^2 + jitter) I
  Eigen::VectorXd alpha;             // (K_AA + sigma^2 I)^{-1} (u - mean)
  double loglik = 0.0;               // log marginal likelihood at the optimum

  int train_size() const { return static_cast<int>(train.size()); }
};

struct Posterior {
  std::vector<Coalition> coalitions;  // B
  Eigen::VectorXd mean;               // E[u_B | u_A]
  Eigen::MatrixXd cov;                // V[u_B | u_A], symmetric PSD (diagonal clamped)
};

// Fits at fixed hyperparameters: factorize K_AA + sigma^2 I (walking a
// jitter ladder 0, 1e-10..1e-6 if the factorization stalls) and compute the
// exact log marginal likelihood.
GPModel fit_fixed(const KernelSpec& spec, double sigma2, std::span<const Coalition> a,
                  const Eigen::VectorXd& u_a, DistanceProvider& distances);

// Exhaustive grid search maximizing the log marginal likelihood; ties go to
// the larger sigma2 (smoother model).  Transport distances are computed once
// per (family, eta) and shared across candidates.
GPModel fit(const HyperGrid& grid, std::span<const Coalition> a, const Eigen::VectorXd& u_a,
            DistanceProvider& distances, int threads = 0);

// Posterior over B through the stored factorization; O(|A|^2 |B|) per call.
Posterior predict(const GPModel& model, std::span<const Coalition> b, DistanceProvider& distances,
                  int threads = 0);

double log_marginal_likelihood(const GPModel& model);

}  // namespace coval

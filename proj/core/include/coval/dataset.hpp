#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coval/common.hpp"

namespace coval {

enum class Task { regression, classification };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

// One owner's private data.  For classification the targets hold small
// non-negative integers stored as doubles (the ingestion layer keeps the
// original label strings in a side table).
struct OwnerDataset {
  int owner_id = 0;
  Eigen::MatrixXd features;  // rows x m, row-major semantics (one point per row)
  Eigen::VectorXd targets;
};

// D_C: the pooled data of a coalition, rows stacked in ascending owner order.
struct AggregatedDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;
  Coalition source;
};

// Checks the cross-owner invariants (shared feature dimension, at least one
// row each, integral labels for classification, ids 0..n-1 in order).
void validate_owners(const std::vector<OwnerDataset>& owners, Task task);

// Number of distinct classes, assuming labels are dense 0..K-1.
int num_classes(const std::vector<OwnerDataset>& owners);

AggregatedDataset aggregate(const std::vector<OwnerDataset>& owners, Coalition c);

// ---------------------------------------------------------------------------
// CSV ingestion.  Header row required.  Every column that is neither the
// owner column nor the target column is a feature.  Owner keys and class
// labels may be arbitrary strings; both are densely re-indexed (numerically
// when every key parses as an integer, lexicographically otherwise) and the
// mappings are returned so reports can name things the way the file did.
// ---------------------------------------------------------------------------

struct TabularData {
  std::vector<OwnerDataset> owners;
  Task task = Task::classification;
  std::vector<std::string> feature_names;   // header order
  std::vector<std::string> owner_names;     // index -> original owner key
  std::vector<std::string> class_names;     // class id -> original label (classification only)
};

TabularData load_csv(const std::filesystem::path& path, const std::string& target_column,
                     Task task, const std::string& owner_column);

// Inverse of load_csv for synthetic data; writes full-precision decimals so a
// load/write cycle is idempotent.
void write_csv(const std::filesystem::path& path, const TabularData& data);

// ---------------------------------------------------------------------------
// Synthetic generators (deterministic under seed).
// ---------------------------------------------------------------------------

// Two interleaved half-circles with N(0, noise^2) jitter on both coordinates.
// Class labels alternate point-by-point within each owner, so every owner
// sees both classes.
std::vector<OwnerDataset> make_moons(int n_owners, int points_per_owner, double noise,
                                     std::uint64_t seed);

// Isotropic Gaussian blobs.  assignment[i] lists the classes owner i draws
// from (uniformly per point); the class of a point indexes class_centers and
// becomes its label.
std::vector<OwnerDataset> make_blobs(int n_owners, const std::vector<Eigen::VectorXd>& class_centers,
                                     double spread, const std::vector<std::vector<int>>& assignment,
                                     int points_per_owner, std::uint64_t seed);

}  // namespace coval

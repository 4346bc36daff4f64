#include "coval/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace coval {

std::string to_string(Task t) {
  return t == Task::regression ? "regression" : "classification";
}

Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw ConfigError(Errc::bad_parameter, "unknown task '" + s + "' (expected regression|classification)");
}

void validate_owners(const std::vector<OwnerDataset>& owners, Task task) {
  if (owners.empty()) throw ConfigError(Errc::bad_parameter, "owner list is empty");
  if (owners.size() > 64)
    throw ConfigError(Errc::too_many_owners,
                      "at most 64 owners supported, got " + std::to_string(owners.size()));
  const Eigen::Index m = owners.front().features.cols();
  for (std::size_t i = 0; i < owners.size(); ++i) {
    const auto& o = owners[i];
    if (o.owner_id != static_cast<int>(i))
      throw ConfigError(Errc::missing_owner, "owner ids must be contiguous 0..n-1; slot " +
                                                 std::to_string(i) + " holds id " +
                                                 std::to_string(o.owner_id));
    if (o.features.rows() < 1)
      throw ConfigError(Errc::bad_parameter, "owner " + std::to_string(i) + " has no rows");
    if (o.features.cols() != m)
      throw ConfigError(Errc::heterogeneous_schema,
                        "owner " + std::to_string(i) + " has " + std::to_string(o.features.cols()) +
                            " features, expected " + std::to_string(m));
    if (o.targets.size() != o.features.rows())
      throw ConfigError(Errc::bad_parameter,
                        "owner " + std::to_string(i) + ": target length != row count");
    if (task == Task::classification) {
      for (Eigen::Index r = 0; r < o.targets.size(); ++r) {
        const double y = o.targets[r];
        if (!(y >= 0.0) || y != std::floor(y))
          throw ConfigError(Errc::unknown_class,
                            "owner " + std::to_string(i) + " row " + std::to_string(r) +
                                ": class label must be a non-negative integer");
      }
    }
  }
}

int num_classes(const std::vector<OwnerDataset>& owners) {
  double top = -1.0;
  for (const auto& o : owners) top = std::max(top, o.targets.size() ? o.targets.maxCoeff() : -1.0);
  return static_cast<int>(top) + 1;
}

AggregatedDataset aggregate(const std::vector<OwnerDataset>& owners, Coalition c) {
  if (c.empty()) throw ConfigError(Errc::empty_coalition, "cannot aggregate the empty coalition");
  Eigen::Index rows = 0;
  for (int i : c.members()) {
    if (i >= static_cast<int>(owners.size()))
      throw ConfigError(Errc::missing_owner,
                        "coalition references owner " + std::to_string(i) + " but only " +
                            std::to_string(owners.size()) + " datasets were given");
    rows += owners[static_cast<std::size_t>(i)].features.rows();
  }
  AggregatedDataset out;
  out.source = c;
  const Eigen::Index m = owners.front().features.cols();
  out.features.resize(rows, m);
  out.targets.resize(rows);
  Eigen::Index at = 0;
  for (int i : c.members()) {  // members() is ascending: stacking order is canonical
    const auto& o = owners[static_cast<std::size_t>(i)];
    out.features.middleRows(at, o.features.rows()) = o.features;
    out.targets.segment(at, o.targets.size()) = o.targets;
    at += o.features.rows();
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

double parse_double(const std::string& s, std::size_t row, const std::string& column) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  if (begin == end)
    throw ConfigError(Errc::parse_error, "row " + std::to_string(row) + ": empty value in column '" +
                                             column + "'");
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError(Errc::parse_error, "row " + std::to_string(row) + ": cannot parse '" + s +
                                             "' in column '" + column + "' as a number");
  return value;
}

bool parses_as_integer(const std::string& s, long long& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

// Dense re-indexing of string keys: numeric order when every key is an
// integer, lexicographic otherwise.
std::vector<std::string> ordered_keys(const std::map<std::string, std::vector<std::size_t>>& groups) {
  std::vector<std::string> keys;
  keys.reserve(groups.size());
  for (const auto& [k, _] : groups) keys.push_back(k);
  bool all_numeric = true;
  std::vector<long long> numeric(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (!parses_as_integer(keys[i], numeric[i])) {
      all_numeric = false;
      break;
    }
  if (all_numeric) {
    std::vector<std::size_t> order(keys.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return numeric[a] < numeric[b]; });
    std::vector<std::string> sorted;
    sorted.reserve(keys.size());
    for (std::size_t i : order) sorted.push_back(keys[i]);
    return sorted;
  }
  return keys;  // std::map already sorted lexicographically
}

}  // namespace

TabularData load_csv(const std::filesystem::path& path, const std::string& target_column, Task task,
                     const std::string& owner_column) {
  std::ifstream in(path);
  if (!in) throw ConfigError(Errc::parse_error, "cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line))
    throw ConfigError(Errc::parse_error, "'" + path.string() + "' is empty (header row required)");
  const std::vector<std::string> header = split_csv_line(line);

  std::ptrdiff_t owner_col = -1, target_col = -1;
  std::vector<std::size_t> feature_cols;
  TabularData result;
  result.task = task;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == owner_column)
      owner_col = static_cast<std::ptrdiff_t>(j);
    else if (header[j] == target_column)
      target_col = static_cast<std::ptrdiff_t>(j);
    else {
      feature_cols.push_back(j);
      result.feature_names.push_back(header[j]);
    }
  }
  if (owner_col < 0)
    throw ConfigError(Errc::parse_error, "owner column '" + owner_column + "' not in header");
  if (target_col < 0)
    throw ConfigError(Errc::parse_error, "target column '" + target_column + "' not in header");
  if (feature_cols.empty())
    throw ConfigError(Errc::parse_error, "no feature columns beside owner and target");

  std::vector<std::vector<double>> feature_rows;
  std::vector<std::string> target_cells;
  std::vector<std::string> owner_cells;
  std::size_t row = 1;  // header is row 0
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") {
      ++row;
      continue;
    }
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ConfigError(Errc::parse_error, "row " + std::to_string(row) + ": expected " +
                                               std::to_string(header.size()) + " cells, got " +
                                               std::to_string(cells.size()));
    std::vector<double> feats(feature_cols.size());
    for (std::size_t f = 0; f < feature_cols.size(); ++f)
      feats[f] = parse_double(cells[feature_cols[f]], row, header[feature_cols[f]]);
    feature_rows.push_back(std::move(feats));
    owner_cells.push_back(cells[static_cast<std::size_t>(owner_col)]);
    target_cells.push_back(cells[static_cast<std::size_t>(target_col)]);
    ++row;
  }
  if (feature_rows.empty())
    throw ConfigError(Errc::parse_error, "'" + path.string() + "' has a header but no data rows");

  std::map<std::string, std::vector<std::size_t>> by_owner;
  for (std::size_t r = 0; r < owner_cells.size(); ++r) by_owner[owner_cells[r]].push_back(r);
  result.owner_names = ordered_keys(by_owner);
  if (result.owner_names.size() > 64)
    throw ConfigError(Errc::too_many_owners, "file has " + std::to_string(result.owner_names.size()) +
                                                 " owners; at most 64 supported");

  // Targets: reals for regression, dense class ids otherwise.
  std::vector<double> target_values(target_cells.size());
  if (task == Task::regression) {
    for (std::size_t r = 0; r < target_cells.size(); ++r)
      target_values[r] = parse_double(target_cells[r], r + 1, target_column);
  } else {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t r = 0; r < target_cells.size(); ++r) by_label[target_cells[r]].push_back(r);
    result.class_names = ordered_keys(by_label);
    std::map<std::string, double> label_id;
    for (std::size_t k = 0; k < result.class_names.size(); ++k)
      label_id[result.class_names[k]] = static_cast<double>(k);
    for (std::size_t r = 0; r < target_cells.size(); ++r) target_values[r] = label_id[target_cells[r]];
  }

  const std::size_t m = feature_cols.size();
  for (std::size_t i = 0; i < result.owner_names.size(); ++i) {
    const auto& rows_of = by_owner[result.owner_names[i]];
    OwnerDataset o;
    o.owner_id = static_cast<int>(i);
    o.features.resize(static_cast<Eigen::Index>(rows_of.size()), static_cast<Eigen::Index>(m));
    o.targets.resize(static_cast<Eigen::Index>(rows_of.size()));
    for (std::size_t r = 0; r < rows_of.size(); ++r) {
      for (std::size_t f = 0; f < m; ++f)
        o.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) =
            feature_rows[rows_of[r]][f];
      o.targets[static_cast<Eigen::Index>(r)] = target_values[rows_of[r]];
    }
    result.owners.push_back(std::move(o));
  }
  validate_owners(result.owners, task);
  return result;
}

namespace {

// Shortest decimal that re-parses to the same double.
std::string format_double(double v) {
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    double back = 0.0;
    std::from_chars(buf, buf + std::strlen(buf), back);
    if (back == v) break;
  }
  return buf;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const TabularData& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError(Errc::parse_error, "cannot write '" + path.string() + "'");
  out << "owner";
  for (const auto& name : data.feature_names) out << ',' << name;
  out << ",target\n";
  for (std::size_t i = 0; i < data.owners.size(); ++i) {
    const auto& o = data.owners[i];
    const std::string owner_name =
        i < data.owner_names.size() ? data.owner_names[i] : std::to_string(i);
    for (Eigen::Index r = 0; r < o.features.rows(); ++r) {
      out << owner_name;
      for (Eigen::Index c = 0; c < o.features.cols(); ++c) out << ',' << format_double(o.features(r, c));
      if (data.task == Task::classification) {
        const auto k = static_cast<std::size_t>(o.targets[r]);
        out << ',' << (k < data.class_names.size() ? data.class_names[k] : std::to_string(k));
      } else {
        out << ',' << format_double(o.targets[r]);
      }
      out << '\n';
    }
  }
}

std::vector<OwnerDataset> make_moons(int n_owners, int points_per_owner, double noise,
                                     std::uint64_t seed) {
  if (n_owners < 1 || points_per_owner < 1)
    throw ConfigError(Errc::bad_parameter, "make_moons needs at least one owner and one point");
  if (noise < 0.0) throw ConfigError(Errc::bad_parameter, "noise must be >= 0");
  constexpr double kPi = 3.14159265358979323846;
  std::vector<OwnerDataset> owners(static_cast<std::size_t>(n_owners));
  Rng rng(derive_seed(seed, /*tag=*/0x4d4f4f4eull));  // "MOON"
  for (int i = 0; i < n_owners; ++i) {
    OwnerDataset o;
    o.owner_id = i;
    o.features.resize(points_per_owner, 2);
    o.targets.resize(points_per_owner);
    for (int r = 0; r < points_per_owner; ++r) {
      const int label = r & 1;
      const double t = kPi * rng.uniform();
      double x, y;
      if (label == 0) {  // upper half-circle
        x = std::cos(t);
        y = std::sin(t);
      } else {  // lower half-circle, shifted to interleave
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      o.features(r, 0) = x + noise * rng.gaussian();
      o.features(r, 1) = y + noise * rng.gaussian();
      o.targets[r] = label;
    }
    owners[static_cast<std::size_t>(i)] = std::move(o);
  }
  return owners;
}

std::vector<OwnerDataset> make_blobs(int n_owners, const std::vector<Eigen::VectorXd>& class_centers,
                                     double spread, const std::vector<std::vector<int>>& assignment,
                                     int points_per_owner, std::uint64_t seed) {
  if (n_owners < 1 || points_per_owner < 1)
    throw ConfigError(Errc::bad_parameter, "make_blobs needs at least one owner and one point");
  if (class_centers.empty()) throw ConfigError(Errc::bad_parameter, "make_blobs needs class centers");
  if (spread < 0.0) throw ConfigError(Errc::bad_parameter, "spread must be >= 0");
  if (assignment.size() != static_cast<std::size_t>(n_owners))
    throw ConfigError(Errc::bad_parameter, "assignment must list classes for every owner");
  const Eigen::Index dim = class_centers.front().size();
  for (const auto& c : class_centers)
    if (c.size() != dim)
      throw ConfigError(Errc::heterogeneous_schema, "class centers must share one dimension");
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i].empty())
      throw ConfigError(Errc::unknown_class, "owner " + std::to_string(i) + " has no assigned class");
    for (int k : assignment[i])
      if (k < 0 || k >= static_cast<int>(class_centers.size()))
        throw ConfigError(Errc::unknown_class, "owner " + std::to_string(i) +
                                                   " assigned unknown class " + std::to_string(k));
  }
  std::vector<OwnerDataset> owners(static_cast<std::size_t>(n_owners));
  Rng rng(derive_seed(seed, /*tag=*/0x424c4f42ull));  // "BLOB"
  for (int i = 0; i < n_owners; ++i) {
    const auto& classes = assignment[static_cast<std::size_t>(i)];
    OwnerDataset o;
    o.owner_id = i;
    o.features.resize(points_per_owner, dim);
    o.targets.resize(points_per_owner);
    for (int r = 0; r < points_per_owner; ++r) {
      const int k = classes[static_cast<std::size_t>(rng.uniform_int(classes.size()))];
      for (Eigen::Index d = 0; d < dim; ++d)
        o.features(r, d) = class_centers[static_cast<std::size_t>(k)][d] + spread * rng.gaussian();
      o.targets[r] = k;
    }
    owners[static_cast<std::size_t>(i)] = std::move(o);
  }
  return owners;
}

}  // namespace coval

#include "coval/common.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace coval {

std::string Coalition::to_string() const {
  std::ostringstream out;
  out << '{';
  bool first = true;
  for (int i : members()) {
    if (!first) out << ',';
    out << i;
    first = false;
  }
  out << '}';
  return out.str();
}

void parallel_for(std::size_t count, int n_threads, const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  std::size_t workers = n_threads > 0 ? static_cast<std::size_t>(n_threads)
                                      : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  // Contiguous chunks, one per worker.  Exceptions are rethrown on the
  // calling thread (first worker's wins).
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double log_binomial(int n, int k) {
  if (k < 0 || k > n) throw ContractError(Errc::bad_parameter, "binomial coefficient out of range");
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double binomial(int n, int k) {
  if (k < 0 || k > n) throw ContractError(Errc::bad_parameter, "binomial coefficient out of range");
  k = std::min(k, n - k);
  double result = 1.0;
  for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return std::round(result);
}

}  // namespace coval

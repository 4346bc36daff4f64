#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace coval {

// ---------------------------------------------------------------------------
// Error model.
//
// ConfigError: the caller asked for something invalid (bad flag, malformed
//   input file, out-of-range parameter).  Maps to CLI exit code 2.
// NumericError: the computation itself broke down (factorization failure,
//   non-finite intermediate).  Maps to CLI exit code 3.
// ContractError: an internal precondition was violated (misaligned weight
//   vectors, cache miss on a frozen cache).  Also exit code 3; reaching one
//   of these from the CLI is a bug, but library callers can trigger them.
// ---------------------------------------------------------------------------

enum class Errc {
  // configuration / input
  parse_error,
  bad_parameter,
  heterogeneous_schema,
  unknown_class,
  missing_owner,
  empty_coalition,
  duplicate_coalition,
  too_many_owners,
  regression_unsupported,
  single_class,
  constant_target,
  budget_exceeds_pool,
  empty_grid,
  // numeric
  factorization_failure,
  not_finite,
  negative_variance,
  // internal contract
  cache_miss,
  dimension_mismatch,
  missing_embedding,
  empty_distribution,
  non_square,
  alignment_error,
  owner_mismatch,
  missing_prefix,
  frozen_cache,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

struct ConfigError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Coalition: a subset of owners encoded as a 64-bit mask (owner i <-> bit i).
// The engine caps the universe at 64 owners; everything downstream relies on
// cheap popcounts and xor-distance between masks.
// ---------------------------------------------------------------------------

class Coalition {
public:
  constexpr Coalition() = default;
  constexpr explicit Coalition(std::uint64_t bits) : bits_(bits) {}

  static Coalition full(int n_owners) {
    if (n_owners < 0 || n_owners > 64)
      throw ConfigError(Errc::too_many_owners,
                        "owner count must be in [0, 64], got " + std::to_string(n_owners));
    if (n_owners == 64) return Coalition(~std::uint64_t{0});
    return Coalition((std::uint64_t{1} << n_owners) - 1);
  }
  static Coalition single(int owner) {
    if (owner < 0 || owner > 63)
      throw ConfigError(Errc::too_many_owners, "owner index out of range: " + std::to_string(owner));
    return Coalition(std::uint64_t{1} << owner);
  }

  constexpr std::uint64_t bits() const { return bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr bool contains(int owner) const { return (bits_ >> owner) & 1u; }

  constexpr Coalition with(int owner) const { return Coalition(bits_ | (std::uint64_t{1} << owner)); }
  constexpr Coalition without(int owner) const { return Coalition(bits_ & ~(std::uint64_t{1} << owner)); }

  // Owner indices in ascending order.
  std::vector<int> members() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (std::uint64_t b = bits_; b != 0; b &= b - 1)
      out.push_back(std::countr_zero(b));
    return out;
  }

  friend constexpr bool operator==(Coalition a, Coalition b) { return a.bits_ == b.bits_; }
  friend constexpr bool operator!=(Coalition a, Coalition b) { return a.bits_ != b.bits_; }
  friend constexpr bool operator<(Coalition a, Coalition b) { return a.bits_ < b.bits_; }

  // Number of owners on which the two coalitions disagree.
  static int symmetric_difference(Coalition a, Coalition b) {
    return std::popcount(a.bits_ ^ b.bits_);
  }

  std::string to_string() const;  // e.g. "{0,2,5}"

private:
  std::uint64_t bits_ = 0;
};

struct CoalitionHash {
  std::size_t operator()(Coalition c) const {
    // splitmix64 finalizer; masks are often near-consecutive integers.
    std::uint64_t x = c.bits() + 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return static_cast<std::size_t>(x ^ (x >> 31));
  }
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::mt19937_64 has a portable bit stream, but the standard distributions
// do not; any run that should be byte-reproducible across platforms draws
// through this wrapper instead of <random> distributions.
// ---------------------------------------------------------------------------

class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t x = (state_ += 0x9e3779b97f4a7c15ull);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in {0, ..., bound-1}; bound > 0.  Uses rejection to stay unbiased.
  std::uint64_t uniform_int(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  // Standard normal via Box-Muller.  Two uniforms are always consumed per
  // pair so the stream position does not depend on previous draws.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // log(0) guard; astronomically rare
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[uniform_int(i)]);
  }

private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Derives an independent stream from a base seed and a purpose tag, so that
// e.g. projection sampling and permutation sampling never share a stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  Rng r(base ^ (0x6a09e667f3bcc909ull + tag * 0x9e3779b97f4a7c15ull));
  return r.next_u64();
}

// ---------------------------------------------------------------------------
// Static parallel-for.  Work item order inside a chunk is preserved, and the
// chunk->thread assignment depends only on (count, n_threads), so results
// that are written to disjoint slots are identical for any thread count.
// ---------------------------------------------------------------------------

void parallel_for(std::size_t count, int n_threads, const std::function<void(std::size_t)>& body);

// log(n choose k) via lgamma; exact enough for weights up to n = 64.
double log_binomial(int n, int k);

// Exact binomial coefficient as double (n <= 64 keeps this exact in the
// cases the engine needs; values can exceed 2^53 for n near 64, which only
// ever feeds ratios computed in log space).
double binomial(int n, int k);

}  // namespace coval

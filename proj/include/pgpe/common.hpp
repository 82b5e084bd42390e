#ifndef PGPE_COMMON_HPP
#define PGPE_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgpe {

using Vector = std::vector<double>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

namespace detail {

inline double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw Error(std::string(what) + " has a non-finite component");
}

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw Error(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                " vs " + std::to_string(b) + ")");
}

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Folds any number of integers into one well-mixed 64-bit seed. Used to give
/// every rollout a seed that depends only on its logical coordinates
/// (run seed, iteration, pair index, sign) and never on scheduling.
template <typename... Ts>
std::uint64_t derive_seed(std::uint64_t base, Ts... parts) {
  std::uint64_t h = detail::mix64(base);
  ((h = detail::mix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

}  // namespace pgpe

#endif  // PGPE_COMMON_HPP

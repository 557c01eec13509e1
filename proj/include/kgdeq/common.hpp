#pragma once

// Shared error types and small numeric helpers used across the library.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace kgdeq {

// Input or configuration problem: bad indices, malformed files, shape
// mismatches. CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A property/audit check that was expected to hold did not. CLI maps this to
// exit code 2.
class AuditError : public std::runtime_error {
public:
  explicit AuditError(const std::string& what) : std::runtime_error(what) {}
};

// Unexpected failure at run time (I/O, non-finite loss, budget exhaustion).
// CLI maps this to exit code 3.
class RuntimeFailure : public std::runtime_error {
public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

// n-th harmonic number H_n = 1 + 1/2 + ... + 1/n (H_0 = 0).
// Sums smallest terms first so the result is accurate to the last bit for
// the sizes used here.
inline double harmonic(std::int64_t n) {
  double h = 0.0;
  for (std::int64_t i = n; i >= 1; --i) h += 1.0 / static_cast<double>(i);
  return h;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace kgdeq

#pragma once

// Shared pieces: error taxonomy, a couple of scalar special functions,
// stable log-sum-exp and a small blocked parallel-for used by the
// streaming paths.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace hdmed {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Broken call contract: bad dimensions, out-of-range options, null inputs.
class InvalidArgument : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Filesystem trouble: open, read, write or seek failures.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Wrong bytes: bad magic, unsupported version, truncated payload.
class FormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: component collapse, degenerate inputs.
class NumericalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Digamma for x > 0, accurate to about 1e-13.
[[nodiscard]] double digamma(double x);

/// Trigamma for x > 0, accurate to about 1e-12.
[[nodiscard]] double trigamma(double x);

/// Stable log(sum(exp(v))). Returns -inf for an all -inf input.
[[nodiscard]] double log_sum_exp(const double* v, Index n);

/// log_sum_exp over any vector expression, including non-contiguous ones
/// such as matrix rows.
template <typename Derived>
[[nodiscard]] double log_sum_exp_row(const Eigen::MatrixBase<Derived>& v) {
  const Index n = v.size();
  double hi = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) hi = std::max(hi, v(i));
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += std::exp(v(i) - hi);
  return hi + std::log(s);
}

/// Number of worker threads for a requested count (<= 0 means the
/// hardware concurrency, floored at 1).
[[nodiscard]] int resolve_threads(int requested);

/// Runs fn(begin, end, slot) over a partition of [0, n) into contiguous
/// blocks, one per slot. Slots are dense in [0, slots) so callers can keep
/// per-slot partials and reduce them in slot order, which keeps results
/// reproducible for a fixed thread count.
void parallel_blocks(std::size_t n, int threads,
                     const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace hdmed

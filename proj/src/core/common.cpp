#include "core/common.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace hdmed {

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw InvalidArgument("digamma: argument must be finite and > 0");
  }
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // asymptotic expansion, next omitted term is below 2e-14 for x >= 10
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return acc + std::log(x) - 0.5 * inv - tail;
}

double trigamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw InvalidArgument("trigamma: argument must be finite and > 0");
  }
  double acc = 0.0;
  while (x < 10.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 -
                                       inv2 * (1.0 / 30.0 -
                                               inv2 * (1.0 / 42.0 - inv2 / 30.0)))));
  return acc + tail;
}

double log_sum_exp(const double* v, Index n) {
  double m = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_blocks(std::size_t n, int threads,
                     const std::function<void(std::size_t, std::size_t, int)>& fn) {
  const int t = std::max(1, resolve_threads(threads));
  if (n == 0) return;
  const std::size_t slots = std::min<std::size_t>(static_cast<std::size_t>(t), n);
  if (slots == 1) {
    fn(0, n, 0);
    return;
  }
  const std::size_t step = (n + slots - 1) / slots;
  std::vector<std::thread> pool;
  pool.reserve(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    const std::size_t begin = s * step;
    const std::size_t end = std::min(n, begin + step);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, s] { fn(begin, end, static_cast<int>(s)); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace hdmed

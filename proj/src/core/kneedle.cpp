#include "core/kneedle.hpp"

#include <cmath>

namespace hdmed {

std::optional<Index> kneedle(const std::vector<double>& values, double sensitivity) {
  const auto n = static_cast<Index>(values.size());
  if (n < 3) throw InvalidArgument("kneedle: need at least three points");
  if (!(sensitivity >= 0.0) || !std::isfinite(sensitivity)) {
    throw InvalidArgument("kneedle: sensitivity must be finite and >= 0");
  }
  double lo = values[0];
  double hi = values[0];
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(values[static_cast<std::size_t>(i)])) {
      throw InvalidArgument("kneedle: values must be finite");
    }
    lo = std::min(lo, values[static_cast<std::size_t>(i)]);
    hi = std::max(hi, values[static_cast<std::size_t>(i)]);
  }
  const double slack = 1e-12 * (std::abs(hi) + std::abs(lo) + 1.0);
  for (Index i = 1; i < n; ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(i - 1)] + slack) {
      throw InvalidArgument("kneedle: curve must be non-increasing");
    }
  }
  if (hi <= lo) return std::nullopt;  // flat

  const double range = hi - lo;
  Index best = 0;
  double best_diff = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    const double y = (values[static_cast<std::size_t>(i)] - lo) / range;
    const double diff = (1.0 - y) - x;
    if (diff > best_diff) {
      best_diff = diff;
      best = i;
    }
  }
  if (best_diff > sensitivity / static_cast<double>(n - 1)) return best;
  return std::nullopt;
}

}  // namespace hdmed

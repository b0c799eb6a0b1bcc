#pragma once

#include "core/common.hpp"

#include <optional>
#include <vector>

namespace hdmed {

/// Elbow index of a non-increasing curve: min-max normalize, flip, and take
/// the argmax of the difference to the diagonal. Returns the index when
/// that maximum clears sensitivity / (n - 1), otherwise nullopt. Needs at
/// least three points; a flat curve has no knee.
[[nodiscard]] std::optional<Index> kneedle(const std::vector<double>& values,
                                           double sensitivity);

}  // namespace hdmed

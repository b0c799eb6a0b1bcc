#pragma once

#include "core/mixture.hpp"

namespace hdmed {

/// Expected complete-data statistics for one component: the responsibility
/// mass s0 and the responsibility-weighted moments of (w y, w y y^T,
/// w |y|^2, w) plus the mixing block s5 = E[r (w, log w)].
struct ComponentStats {
  double s0 = 0.0;
  VectorXd s1;
  MatrixXd s2;
  double s3 = 0.0;
  double s4 = 0.0;
  Eigen::Vector2d s5 = Eigen::Vector2d::Zero();
};

struct SuffStats {
  std::vector<ComponentStats> comp;

  [[nodiscard]] static SuffStats zeros(Index k, Index m);
  [[nodiscard]] Index size() const { return static_cast<Index>(comp.size()); }
  [[nodiscard]] Index dim() const { return comp.empty() ? 0 : comp[0].s1.size(); }
  /// Total responsibility mass; 1 for per-observation averages.
  [[nodiscard]] double mass() const;
};

/// Per-observation expected statistics under the current model.
[[nodiscard]] SuffStats expected_stats(const HdMedModel& model,
                                       const Eigen::Ref<const VectorXd>& y);

/// Within-batch average of per-observation expected statistics, computed
/// with blocked matrix products. Partial blocks are reduced in slot order,
/// so results are reproducible for a fixed thread count.
[[nodiscard]] SuffStats expected_stats_rows(const HdMedModel& model,
                                            const Eigen::Ref<const MatrixXd>& rows,
                                            int threads = 0);

/// Stochastic approximation blend: gamma * fresh + (1 - gamma) * prev.
[[nodiscard]] SuffStats sa_update(const SuffStats& prev, const SuffStats& fresh, double gamma);

}  // namespace hdmed

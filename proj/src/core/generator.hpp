#pragma once

#include "core/common.hpp"

#include <cstdint>

namespace hdmed {

enum class MixingKind : std::uint8_t { Gaussian = 0, GammaMix = 1 };

/// Mixing law of the latent precision scale W in Y | W ~ N(mu, Sigma / W).
/// Gaussian pins W = 1. GammaMix is Gamma(alpha, rate beta); the Student-t
/// family is the diagonal alpha = beta = nu / 2.
struct MixingFamily {
  MixingKind kind = MixingKind::Gaussian;
  double alpha = 0.0;
  double beta = 0.0;

  [[nodiscard]] static MixingFamily gaussian() { return {}; }
  [[nodiscard]] static MixingFamily gamma_mix(double alpha, double beta);
  [[nodiscard]] static MixingFamily student(double nu);

  [[nodiscard]] bool is_gamma() const { return kind == MixingKind::GammaMix; }
  /// Degrees of freedom, only meaningful when alpha == beta.
  [[nodiscard]] double nu() const { return 2.0 * alpha; }

  void validate() const;
  [[nodiscard]] bool operator==(const MixingFamily&) const = default;
};

/// Log radial generator at squared Mahalanobis distance u in dimension M,
/// and its derivative in u. The (2 pi)^{-M/2} constant and the mixing
/// normalization are folded in, so log density = log_g - 0.5 * log|Sigma|.
struct GeneratorEval {
  double log_g;
  double dlog_g;
};

[[nodiscard]] GeneratorEval generator_eval(const MixingFamily& mix, double u, int m_dim);

/// Posterior moments of W for an observation at squared distance u:
/// e_w = E[W | u], e_logw = E[log W | u]. For GammaMix the posterior is
/// Gamma(alpha + M/2, beta + u/2); Gaussian gives the constants (1, 0).
struct WeightPosterior {
  double e_w;
  double e_logw;
};

[[nodiscard]] WeightPosterior weight_posterior(const MixingFamily& mix, double u, int m_dim);

}  // namespace hdmed

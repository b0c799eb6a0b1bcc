#pragma once

#include "core/generator.hpp"

#include <cstdint>

namespace hdmed {

/// One elliptical component with spiked scale structure
/// Sigma = b I + Dstar diag(a - b) Dstar^T. Only the d leading basis
/// vectors are stored; the M - d trailing directions share the scale b.
struct HdEdComponent {
  VectorXd mu;     // center, length M
  MatrixXd dstar;  // M x d, orthonormal columns
  VectorXd a;      // leading scale eigenvalues, non-increasing, all > b
  double b = 0.0;  // shared trailing scale eigenvalue
  MixingFamily mixing;

  [[nodiscard]] Index dim() const { return mu.size(); }
  [[nodiscard]] Index rank() const { return dstar.cols(); }

  /// Contract checks: matching shapes, orthonormal columns to 1e-10,
  /// non-increasing a with a.min > b > 0, valid mixing. rank == dim is
  /// accepted (full-rank setups exist only in reduced-to-full tests;
  /// fitted models keep rank <= dim - 1).
  void validate() const;
};

/// Squared Mahalanobis distance through the reduced parameterization,
/// O(M d). Non-negative; a tiny negative residual from cancellation is
/// clamped, anything worse raises NumericalError.
[[nodiscard]] double mahalanobis_reduced(const HdEdComponent& c,
                                         const Eigen::Ref<const VectorXd>& y);

/// log det Sigma = sum log a_m + (M - d) log b.
[[nodiscard]] double log_det_scale(const HdEdComponent& c);

/// Log density at y: log_g(mahalanobis) - 0.5 * log det Sigma.
[[nodiscard]] double log_pdf(const HdEdComponent& c, const Eigen::Ref<const VectorXd>& y);

/// Posterior mixing-weight moments at y.
[[nodiscard]] WeightPosterior weight_posterior(const HdEdComponent& c,
                                               const Eigen::Ref<const VectorXd>& y);

/// n draws, one observation per row: W ~ mixing, X ~ N(0, I_d / W),
/// E ~ N(0, b I_M / W), Y = Dstar sqrt(diag(a) - b I) X + mu + E.
[[nodiscard]] MatrixXd sample_component(const HdEdComponent& c, Index n, std::uint64_t seed);

// Row-batch versions used by the streaming paths (one observation per row).
[[nodiscard]] VectorXd mahalanobis_reduced_rows(const HdEdComponent& c,
                                                const Eigen::Ref<const MatrixXd>& rows);
[[nodiscard]] VectorXd log_pdf_rows(const HdEdComponent& c,
                                    const Eigen::Ref<const MatrixXd>& rows);

}  // namespace hdmed

#pragma once

#include "core/generator.hpp"

#include <cstdint>
#include <vector>

namespace hdmed {

/// Dense full-covariance mixture estimates. These exist to seed the reduced
/// model: the spectral step eigendecomposes each covariance.
struct FullCovMixture {
  MixingKind family = MixingKind::Gaussian;
  VectorXd weights;
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covariances;
  std::vector<double> nu;  // per component, Student only

  [[nodiscard]] Index size() const { return weights.size(); }
  [[nodiscard]] Index dim() const { return means.empty() ? 0 : means[0].size(); }
};

struct BatchEmResult {
  FullCovMixture mixture;
  /// Log likelihood of the data under the parameters entering each
  /// iteration; non-decreasing for an exact EM step.
  std::vector<double> loglik_per_iter;
};

/// In-memory full-covariance EM, one observation per row. Seeds centers by
/// a farthest-point style draw, then alternates exact E and M steps. For
/// the Student family the degrees of freedom are re-solved each M step.
[[nodiscard]] BatchEmResult fit_batch(const Eigen::Ref<const MatrixXd>& data, Index k,
                                      MixingKind family, int iterations, std::uint64_t seed,
                                      double nu_init = 10.0);

/// Log likelihood of rows under a dense mixture.
[[nodiscard]] double log_likelihood_full(const FullCovMixture& m,
                                         const Eigen::Ref<const MatrixXd>& rows);

/// Solves avg_logw - avg_w + 1 + log(nu/2) - digamma(nu/2) = 0 for nu,
/// clamped to [0.1, 1000]. Monotone bisection with a Newton polish.
[[nodiscard]] double solve_degrees_of_freedom(double avg_w, double avg_logw);

}  // namespace hdmed

#pragma once

#include "core/component.hpp"

#include <cstdint>
#include <vector>

namespace hdmed {

class DictionaryStore;

/// Mixture of elliptical components over a shared signal dimension.
/// All components carry the same mixing kind; weights form a simplex.
struct HdMedModel {
  std::vector<HdEdComponent> components;
  VectorXd weights;

  [[nodiscard]] Index size() const { return static_cast<Index>(components.size()); }
  [[nodiscard]] Index dim() const { return components.empty() ? 0 : components[0].dim(); }
  [[nodiscard]] MixingKind family() const {
    return components.empty() ? MixingKind::Gaussian : components[0].mixing.kind;
  }

  void validate() const;
};

/// Per-observation posterior over components plus the observation's
/// log density under the mixture.
struct Responsibilities {
  VectorXd r;
  double log_density = 0.0;
};

[[nodiscard]] Responsibilities responsibilities(const HdMedModel& m,
                                                const Eigen::Ref<const VectorXd>& y);

/// Batch version: returns one row of responsibilities per observation.
/// When row_log_density is non-null it receives each row's log density.
/// Raises NumericalError if some observation has zero density under every
/// component.
[[nodiscard]] MatrixXd responsibilities_rows(const HdMedModel& m,
                                             const Eigen::Ref<const MatrixXd>& rows,
                                             VectorXd* row_log_density = nullptr);

[[nodiscard]] double log_likelihood_rows(const HdMedModel& m,
                                         const Eigen::Ref<const MatrixXd>& rows);

/// Total log likelihood of a stored dictionary, streamed in chunks.
[[nodiscard]] double log_likelihood(const HdMedModel& m, const DictionaryStore& data,
                                    int threads = 0, Index chunk_rows = 8192);

/// Most responsible component; ties break to the lowest index.
[[nodiscard]] Index assign(const HdMedModel& m, const Eigen::Ref<const VectorXd>& y);
[[nodiscard]] std::vector<Index> assign_rows(const HdMedModel& m,
                                             const Eigen::Ref<const MatrixXd>& rows);

/// Free parameters: (K - 1) mixture weights plus, per component, M for the
/// center, dM - d(d+1)/2 for the basis, d leading scales, the trailing
/// scale, and the mixing parameters.
[[nodiscard]] std::int64_t free_parameter_count(const HdMedModel& m);

/// Bayesian information criterion from a precomputed total log likelihood.
[[nodiscard]] double bic_from_log_likelihood(const HdMedModel& m, double total_loglik,
                                             std::uint64_t n);

/// BIC of the model on a stored dictionary.
[[nodiscard]] double bic(const HdMedModel& m, const DictionaryStore& data, int threads = 0);

}  // namespace hdmed

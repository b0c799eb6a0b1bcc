#pragma once

#include "core/component.hpp"

namespace hdmed {

struct HdMedModel;
class DictionaryStore;

/// Affine reduction onto a component's leading directions and the matching
/// decompression map. project returns the posterior mean of the latent
/// coordinate, xhat = U^{-1} V^T (y - mu) with U = b I + V^T V = diag(a);
/// reconstruct returns V xhat + mu.
struct ProjectionOperator {
  VectorXd mu;
  MatrixXd v;      // M x d loading matrix, V = Dstar sqrt(diag(a) - b I)
  VectorXd u_inv;  // diagonal of U^{-1}, equals 1 / a
  double b = 0.0;

  [[nodiscard]] Index dim() const { return mu.size(); }
  [[nodiscard]] Index rank() const { return v.cols(); }
};

[[nodiscard]] ProjectionOperator loading_matrix(const HdEdComponent& c);

[[nodiscard]] VectorXd project(const ProjectionOperator& p, const Eigen::Ref<const VectorXd>& y);
[[nodiscard]] MatrixXd project_rows(const ProjectionOperator& p,
                                    const Eigen::Ref<const MatrixXd>& rows);

[[nodiscard]] VectorXd reconstruct(const ProjectionOperator& p,
                                   const Eigen::Ref<const VectorXd>& xhat);
[[nodiscard]] MatrixXd reconstruct_rows(const ProjectionOperator& p,
                                        const Eigen::Ref<const MatrixXd>& xhat_rows);

struct ReconstructionError {
  double rmse = 0.0;              // sqrt(mean over rows of |y - yhat|^2)
  double mean_signal_norm = 0.0;  // mean over rows of |y|
};

/// Streams the store, routes each signal to its best component, compresses
/// and decompresses it there, and accumulates the reconstruction error.
[[nodiscard]] ReconstructionError reconstruction_rmse(const HdMedModel& model,
                                                      const DictionaryStore& data,
                                                      int threads = 0,
                                                      Index chunk_rows = 8192);

}  // namespace hdmed

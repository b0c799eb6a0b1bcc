#include "core/projection.hpp"

#include "core/dictionary.hpp"
#include "core/mixture.hpp"

#include <cmath>
#include <vector>

namespace hdmed {

ProjectionOperator loading_matrix(const HdEdComponent& c) {
  ProjectionOperator p;
  p.mu = c.mu;
  p.v = c.dstar * (c.a.array() - c.b).sqrt().matrix().asDiagonal();
  p.u_inv = c.a.array().inverse();
  p.b = c.b;
  return p;
}

VectorXd project(const ProjectionOperator& p, const Eigen::Ref<const VectorXd>& y) {
  if (y.size() != p.dim()) throw InvalidArgument("project: dimension mismatch");
  return p.u_inv.asDiagonal() * (p.v.transpose() * (y - p.mu));
}

MatrixXd project_rows(const ProjectionOperator& p, const Eigen::Ref<const MatrixXd>& rows) {
  if (rows.cols() != p.dim()) throw InvalidArgument("project: dimension mismatch");
  return ((rows.rowwise() - p.mu.transpose()) * p.v) * p.u_inv.asDiagonal();
}

VectorXd reconstruct(const ProjectionOperator& p, const Eigen::Ref<const VectorXd>& xhat) {
  if (xhat.size() != p.rank()) throw InvalidArgument("reconstruct: dimension mismatch");
  return p.v * xhat + p.mu;
}

MatrixXd reconstruct_rows(const ProjectionOperator& p,
                          const Eigen::Ref<const MatrixXd>& xhat_rows) {
  if (xhat_rows.cols() != p.rank()) throw InvalidArgument("reconstruct: dimension mismatch");
  return (xhat_rows * p.v.transpose()).rowwise() + p.mu.transpose();
}

ReconstructionError reconstruction_rmse(const HdMedModel& model, const DictionaryStore& data,
                                        int threads, Index chunk_rows) {
  model.validate();
  if (data.rows() == 0) throw InvalidArgument("reconstruction_rmse: empty data stream");
  if (data.signal_dim() != model.dim()) {
    throw InvalidArgument("reconstruction_rmse: store dimension does not match the model");
  }
  std::vector<ProjectionOperator> ops;
  ops.reserve(static_cast<std::size_t>(model.size()));
  for (const auto& c : model.components) ops.push_back(loading_matrix(c));

  double sq_sum = 0.0;
  double norm_sum = 0.0;
  const int slots = resolve_threads(threads);
  data.for_each_chunk(chunk_rows, [&](const MatrixXd& signals, const MatrixXd&, std::uint64_t) {
    std::vector<double> sq(static_cast<std::size_t>(slots), 0.0);
    std::vector<double> nm(static_cast<std::size_t>(slots), 0.0);
    parallel_blocks(static_cast<std::size_t>(signals.rows()), threads,
                    [&](std::size_t b, std::size_t e, int slot) {
                      const auto block =
                          signals.middleRows(static_cast<Index>(b), static_cast<Index>(e - b));
                      const auto labels = assign_rows(model, block);
                      double s = 0.0;
                      double n = 0.0;
                      for (Index i = 0; i < block.rows(); ++i) {
                        const auto& op = ops[static_cast<std::size_t>(labels[i])];
                        const VectorXd y = block.row(i).transpose();
                        const VectorXd back = reconstruct(op, project(op, y));
                        s += (y - back).squaredNorm();
                        n += y.norm();
                      }
                      sq[static_cast<std::size_t>(slot)] = s;
                      nm[static_cast<std::size_t>(slot)] = n;
                    });
    for (int s = 0; s < slots; ++s) {
      sq_sum += sq[static_cast<std::size_t>(s)];
      norm_sum += nm[static_cast<std::size_t>(s)];
    }
  });
  const double n = static_cast<double>(data.rows());
  return {std::sqrt(sq_sum / n), norm_sum / n};
}

}  // namespace hdmed

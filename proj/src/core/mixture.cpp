#include "core/mixture.hpp"

#include "core/dictionary.hpp"

#include <cmath>

namespace hdmed {

void HdMedModel::validate() const {
  const Index k = size();
  if (k < 1) throw InvalidArgument("model: need at least one component");
  if (weights.size() != k) throw InvalidArgument("model: weight count mismatch");
  if (!weights.allFinite() || (weights.array() <= 0.0).any()) {
    throw InvalidArgument("model: weights must be finite and > 0");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw InvalidArgument("model: weights must sum to 1 within 1e-12");
  }
  const Index m = components[0].dim();
  const MixingKind kind = components[0].mixing.kind;
  for (const auto& c : components) {
    c.validate();
    if (c.dim() != m) throw InvalidArgument("model: components disagree on dimension");
    if (c.mixing.kind != kind) throw InvalidArgument("model: components disagree on family");
  }
}

namespace {

// One row of log(pi_k) + log p_k(y) per observation.
MatrixXd log_joint_rows(const HdMedModel& m, const Eigen::Ref<const MatrixXd>& rows) {
  const Index k = m.size();
  MatrixXd logits(rows.rows(), k);
  for (Index j = 0; j < k; ++j) {
    logits.col(j) = log_pdf_rows(m.components[j], rows).array() + std::log(m.weights[j]);
  }
  return logits;
}

}  // namespace

MatrixXd responsibilities_rows(const HdMedModel& m, const Eigen::Ref<const MatrixXd>& rows,
                               VectorXd* row_log_density) {
  MatrixXd logits = log_joint_rows(m, rows);
  if (row_log_density) row_log_density->resize(rows.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double lse = log_sum_exp_row(logits.row(i));
    if (!std::isfinite(lse)) {
      throw NumericalError("responsibilities: observation has zero density under every component");
    }
    logits.row(i) = (logits.row(i).array() - lse).exp();
    if (row_log_density) (*row_log_density)[i] = lse;
  }
  return logits;
}

Responsibilities responsibilities(const HdMedModel& m, const Eigen::Ref<const VectorXd>& y) {
  VectorXd lse(1);
  const MatrixXd r = responsibilities_rows(m, y.transpose(), &lse);
  return {r.row(0).transpose(), lse[0]};
}

double log_likelihood_rows(const HdMedModel& m, const Eigen::Ref<const MatrixXd>& rows) {
  VectorXd lse;
  (void)responsibilities_rows(m, rows, &lse);
  return lse.sum();
}

double log_likelihood(const HdMedModel& m, const DictionaryStore& data, int threads,
                      Index chunk_rows) {
  if (data.rows() == 0) throw InvalidArgument("log_likelihood: empty data stream");
  if (data.signal_dim() != m.dim()) {
    throw InvalidArgument("log_likelihood: store dimension does not match the model");
  }
  double total = 0.0;
  data.for_each_chunk(chunk_rows, [&](const MatrixXd& signals, const MatrixXd&, std::uint64_t) {
    const auto n = static_cast<std::size_t>(signals.rows());
    std::vector<double> partial(static_cast<std::size_t>(resolve_threads(threads)), 0.0);
    parallel_blocks(n, threads, [&](std::size_t b, std::size_t e, int slot) {
      partial[static_cast<std::size_t>(slot)] = log_likelihood_rows(
          m, signals.middleRows(static_cast<Index>(b), static_cast<Index>(e - b)));
    });
    for (double p : partial) total += p;
  });
  return total;
}

Index assign(const HdMedModel& m, const Eigen::Ref<const VectorXd>& y) {
  return assign_rows(m, y.transpose())[0];
}

std::vector<Index> assign_rows(const HdMedModel& m, const Eigen::Ref<const MatrixXd>& rows) {
  const MatrixXd logits = log_joint_rows(m, rows);
  std::vector<Index> out(static_cast<std::size_t>(rows.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    double best_v = logits(i, 0);
    for (Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > best_v) {
        best_v = logits(i, j);
        best = j;
      }
    }
    if (!std::isfinite(best_v)) {
      throw NumericalError("assign: observation has zero density under every component");
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::int64_t free_parameter_count(const HdMedModel& m) {
  const auto M = static_cast<std::int64_t>(m.dim());
  std::int64_t count = m.size() - 1;
  for (const auto& c : m.components) {
    const auto d = static_cast<std::int64_t>(c.rank());
    count += M;                      // center
    count += d * M - d * (d + 1) / 2;  // orthonormal basis
    count += d + 1;                  // leading scales and the trailing one
    if (c.mixing.is_gamma()) count += 1;  // degrees of freedom
  }
  return count;
}

double bic_from_log_likelihood(const HdMedModel& m, double total_loglik, std::uint64_t n) {
  if (n == 0) throw InvalidArgument("bic: sample count must be > 0");
  return -2.0 * total_loglik +
         static_cast<double>(free_parameter_count(m)) * std::log(static_cast<double>(n));
}

double bic(const HdMedModel& m, const DictionaryStore& data, int threads) {
  return bic_from_log_likelihood(m, log_likelihood(m, data, threads), data.rows());
}

}  // namespace hdmed

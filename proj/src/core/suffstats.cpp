#include "core/suffstats.hpp"

#include <cmath>
#include <vector>

namespace hdmed {

SuffStats SuffStats::zeros(Index k, Index m) {
  SuffStats s;
  s.comp.resize(static_cast<std::size_t>(k));
  for (auto& c : s.comp) {
    c.s1 = VectorXd::Zero(m);
    c.s2 = MatrixXd::Zero(m, m);
  }
  return s;
}

double SuffStats::mass() const {
  double t = 0.0;
  for (const auto& c : comp) t += c.s0;
  return t;
}

SuffStats expected_stats(const HdMedModel& model, const Eigen::Ref<const VectorXd>& y) {
  return expected_stats_rows(model, y.transpose());
}

namespace {

// Accumulates stats of one block of rows into acc (sums, not averages).
void accumulate_block(const HdMedModel& model, const Eigen::Ref<const MatrixXd>& rows,
                      SuffStats& acc) {
  const Index k = model.size();
  const MatrixXd resp = responsibilities_rows(model, rows);
  const VectorXd row_sq = rows.rowwise().squaredNorm();

  for (Index j = 0; j < k; ++j) {
    const auto& c = model.components[j];
    VectorXd ew(rows.rows());
    VectorXd elogw(rows.rows());
    if (c.mixing.is_gamma()) {
      const VectorXd u = mahalanobis_reduced_rows(c, rows);
      const int m = static_cast<int>(c.dim());
      for (Index i = 0; i < rows.rows(); ++i) {
        const WeightPosterior wp = weight_posterior(c.mixing, u[i], m);
        ew[i] = wp.e_w;
        elogw[i] = wp.e_logw;
      }
    } else {
      ew.setOnes();
      elogw.setZero();
    }
    const VectorXd r = resp.col(j);
    const VectorXd cw = r.cwiseProduct(ew);
    auto& out = acc.comp[static_cast<std::size_t>(j)];
    out.s0 += r.sum();
    out.s1.noalias() += rows.transpose() * cw;
    const MatrixXd weighted = rows.array().colwise() * cw.array();
    out.s2.noalias() += rows.transpose() * weighted;
    out.s3 += cw.dot(row_sq);
    out.s4 += cw.sum();
    out.s5[0] += cw.sum();
    out.s5[1] += r.dot(elogw);
  }
}

}  // namespace

SuffStats expected_stats_rows(const HdMedModel& model, const Eigen::Ref<const MatrixXd>& rows,
                              int threads) {
  if (rows.rows() == 0) throw InvalidArgument("expected_stats: empty batch");
  if (rows.cols() != model.dim()) {
    throw InvalidArgument("expected_stats: batch dimension does not match the model");
  }
  const Index k = model.size();
  const Index m = model.dim();
  const int slots = resolve_threads(threads);
  std::vector<SuffStats> partial(static_cast<std::size_t>(slots), SuffStats::zeros(k, m));
  parallel_blocks(static_cast<std::size_t>(rows.rows()), threads,
                  [&](std::size_t b, std::size_t e, int slot) {
                    accumulate_block(model,
                                     rows.middleRows(static_cast<Index>(b),
                                                     static_cast<Index>(e - b)),
                                     partial[static_cast<std::size_t>(slot)]);
                  });
  SuffStats total = SuffStats::zeros(k, m);
  for (const auto& p : partial) {
    for (Index j = 0; j < k; ++j) {
      auto& t = total.comp[static_cast<std::size_t>(j)];
      const auto& q = p.comp[static_cast<std::size_t>(j)];
      t.s0 += q.s0;
      t.s1 += q.s1;
      t.s2 += q.s2;
      t.s3 += q.s3;
      t.s4 += q.s4;
      t.s5 += q.s5;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(rows.rows());
  for (auto& c : total.comp) {
    c.s0 *= inv_n;
    c.s1 *= inv_n;
    c.s2 *= inv_n;
    c.s3 *= inv_n;
    c.s4 *= inv_n;
    c.s5 *= inv_n;
  }
  return total;
}

SuffStats sa_update(const SuffStats& prev, const SuffStats& fresh, double gamma) {
  if (!(gamma > 0.0) || !(gamma <= 1.0)) {
    throw InvalidArgument("sa_update: gamma must lie in (0, 1]");
  }
  if (prev.size() != fresh.size() || prev.dim() != fresh.dim()) {
    throw InvalidArgument("sa_update: statistic shapes differ");
  }
  const double keep = 1.0 - gamma;
  SuffStats out = prev;
  for (Index j = 0; j < prev.size(); ++j) {
    auto& o = out.comp[static_cast<std::size_t>(j)];
    const auto& f = fresh.comp[static_cast<std::size_t>(j)];
    o.s0 = keep * o.s0 + gamma * f.s0;
    o.s1 = keep * o.s1 + gamma * f.s1;
    o.s2 = keep * o.s2 + gamma * f.s2;
    o.s3 = keep * o.s3 + gamma * f.s3;
    o.s4 = keep * o.s4 + gamma * f.s4;
    o.s5 = keep * o.s5 + gamma * f.s5;
  }
  return out;
}

}  // namespace hdmed

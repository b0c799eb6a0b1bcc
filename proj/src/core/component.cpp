#include "core/component.hpp"

#include <cmath>
#include <random>

namespace hdmed {
namespace {

constexpr double kOrthoTol = 1e-10;

// Residual energy outside the stored basis; cancellation can push it a hair
// below zero, tolerated relative to the centered norm.
double clamp_residual(double resid, double total_sq) {
  if (resid >= 0.0) return resid;
  const double tol = 1e-12 * std::max(1.0, total_sq);
  if (resid >= -tol) return 0.0;
  throw NumericalError("mahalanobis: residual energy is negative beyond round-off");
}

void check_dim(const HdEdComponent& c, Index got) {
  if (got != c.dim()) {
    throw InvalidArgument("component: observation dimension does not match the component");
  }
}

}  // namespace

void HdEdComponent::validate() const {
  const Index m = dim();
  const Index d = rank();
  if (m < 1 || d < 1 || d > m) {
    throw InvalidArgument("component: need 1 <= rank <= dim");
  }
  if (dstar.rows() != m || a.size() != d) {
    throw InvalidArgument("component: shape mismatch between mu, dstar and a");
  }
  if (!mu.allFinite() || !dstar.allFinite() || !a.allFinite() || !std::isfinite(b)) {
    throw InvalidArgument("component: parameters must be finite");
  }
  if (!(b > 0.0)) throw InvalidArgument("component: trailing scale b must be > 0");
  for (Index i = 0; i < d; ++i) {
    if (!(a[i] > b)) throw InvalidArgument("component: leading scales must all exceed b");
    if (i + 1 < d && a[i] < a[i + 1]) {
      throw InvalidArgument("component: leading scales must be non-increasing");
    }
  }
  const MatrixXd gram = dstar.transpose() * dstar;
  const double dev = (gram - MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
  if (dev > kOrthoTol) {
    throw InvalidArgument("component: basis columns are not orthonormal to 1e-10");
  }
  mixing.validate();
}

double mahalanobis_reduced(const HdEdComponent& c, const Eigen::Ref<const VectorXd>& y) {
  check_dim(c, y.size());
  const VectorXd delta = y - c.mu;
  const VectorXd z = c.dstar.transpose() * delta;
  const double total_sq = delta.squaredNorm();
  const double resid = clamp_residual(total_sq - z.squaredNorm(), total_sq);
  const double leading = (z.array().square() / c.a.array()).sum();
  return leading + resid / c.b;
}

VectorXd mahalanobis_reduced_rows(const HdEdComponent& c,
                                  const Eigen::Ref<const MatrixXd>& rows) {
  check_dim(c, rows.cols());
  const MatrixXd centered = rows.rowwise() - c.mu.transpose();
  const MatrixXd z = centered * c.dstar;
  const VectorXd total_sq = centered.rowwise().squaredNorm();
  const VectorXd z_sq = z.rowwise().squaredNorm();
  VectorXd u = (z.array().square().rowwise() * c.a.array().inverse().transpose())
                   .rowwise()
                   .sum();
  for (Index i = 0; i < rows.rows(); ++i) {
    u[i] += clamp_residual(total_sq[i] - z_sq[i], total_sq[i]) / c.b;
  }
  return u;
}

double log_det_scale(const HdEdComponent& c) {
  const double lead = c.a.array().log().sum();
  return lead + static_cast<double>(c.dim() - c.rank()) * std::log(c.b);
}

double log_pdf(const HdEdComponent& c, const Eigen::Ref<const VectorXd>& y) {
  const double u = mahalanobis_reduced(c, y);
  return generator_eval(c.mixing, u, static_cast<int>(c.dim())).log_g -
         0.5 * log_det_scale(c);
}

VectorXd log_pdf_rows(const HdEdComponent& c, const Eigen::Ref<const MatrixXd>& rows) {
  VectorXd u = mahalanobis_reduced_rows(c, rows);
  const double half_logdet = 0.5 * log_det_scale(c);
  const int m = static_cast<int>(c.dim());
  for (Index i = 0; i < u.size(); ++i) {
    u[i] = generator_eval(c.mixing, u[i], m).log_g - half_logdet;
  }
  return u;
}

WeightPosterior weight_posterior(const HdEdComponent& c, const Eigen::Ref<const VectorXd>& y) {
  return weight_posterior(c.mixing, mahalanobis_reduced(c, y), static_cast<int>(c.dim()));
}

MatrixXd sample_component(const HdEdComponent& c, Index n, std::uint64_t seed) {
  c.validate();
  if (n < 0) throw InvalidArgument("sample_component: n must be >= 0");
  const Index m = c.dim();
  const Index d = c.rank();
  const MatrixXd v = c.dstar * (c.a.array() - c.b).sqrt().matrix().asDiagonal();
  const double sqrt_b = std::sqrt(c.b);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::gamma_distribution<double> gamma;
  if (c.mixing.is_gamma()) {
    gamma = std::gamma_distribution<double>(c.mixing.alpha, 1.0 / c.mixing.beta);
  }

  MatrixXd out(n, m);
  VectorXd x(d);
  VectorXd e(m);
  for (Index i = 0; i < n; ++i) {
    const double w = c.mixing.is_gamma() ? gamma(rng) : 1.0;
    const double scale = 1.0 / std::sqrt(w);
    for (Index j = 0; j < d; ++j) x[j] = normal(rng) * scale;
    for (Index j = 0; j < m; ++j) e[j] = normal(rng) * scale * sqrt_b;
    out.row(i) = (v * x + c.mu + e).transpose();
  }
  return out;
}

}  // namespace hdmed

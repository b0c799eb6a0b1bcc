#pragma once

// Shared helpers for the test suites: dense-matrix reference
// implementations, quadrature oracles for the scale-mixture integrals,
// random model factories and clustering metrics. Everything here favors
// clarity over speed; these are the independent answers the fast paths
// are checked against.

#include "core/component.hpp"
#include "core/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testutil {

// Scratch files live in one per-process directory under /tmp.
inline std::string temp_path(const std::string& name) {
  static const std::filesystem::path dir = [] {
    std::filesystem::path p =
        std::filesystem::temp_directory_path() /
        ("hdmed_tests_" + std::to_string(::getpid()));
    std::filesystem::create_directories(p);
    return p;
  }();
  return (dir / name).string();
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

using hdmed::Index;
using hdmed::MatrixXd;
using hdmed::VectorXd;

// Dense covariance assembled from the structured parameterization.
inline MatrixXd dense_scale(const hdmed::HdEdComponent& c) {
  const Index m = c.dim();
  MatrixXd sigma = c.b * MatrixXd::Identity(m, m);
  sigma += c.dstar * (c.a.array() - c.b).matrix().asDiagonal() * c.dstar.transpose();
  return sigma;
}

// Reference density through a full LLT factorization.
inline double dense_log_pdf(const hdmed::HdEdComponent& c,
                            const Eigen::Ref<const VectorXd>& y) {
  const MatrixXd sigma = dense_scale(c);
  const Eigen::LLT<MatrixXd> llt(sigma);
  const VectorXd diff = y - c.mu;
  const double u = diff.dot(llt.solve(diff));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return hdmed::generator_eval(c.mixing, std::max(u, 0.0), static_cast<int>(c.dim())).log_g -
         0.5 * logdet;
}

inline double dense_mahalanobis(const hdmed::HdEdComponent& c,
                                const Eigen::Ref<const VectorXd>& y) {
  const MatrixXd sigma = dense_scale(c);
  const Eigen::LLT<MatrixXd> llt(sigma);
  const VectorXd diff = y - c.mu;
  return diff.dot(llt.solve(diff));
}

// Posterior moments of the latent scale by composite Simpson quadrature on
// a log grid. The posterior is proportional to
//   w^(alpha + M/2 - 1) exp(-w (beta + u/2))
// so the integrand is evaluated in log space and normalized explicitly.
struct ScaleMoments {
  double e_w = 0.0;
  double e_logw = 0.0;
};

inline ScaleMoments quadrature_scale_moments(double alpha, double beta, double u, int m_dim,
                                             int points = 20001) {
  const double shape = alpha + 0.5 * m_dim;
  const double rate = beta + 0.5 * u;
  // integrate t = log w over mean +- wide spread of the posterior gamma
  const double t_mode = std::log(shape / rate);
  const double half_width = 40.0 / std::sqrt(shape);
  const double lo = t_mode - half_width - 5.0;
  const double hi = t_mode + half_width + 5.0;
  const int n = points | 1;  // Simpson wants an odd count
  const double h = (hi - lo) / (n - 1);

  // log of the unnormalized posterior density in t: w = e^t, including the
  // Jacobian dw = w dt.
  auto log_f = [&](double t) { return shape * t - rate * std::exp(t); };

  double max_lf = -std::numeric_limits<double>::infinity();
  std::vector<double> lf(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    lf[static_cast<std::size_t>(i)] = log_f(lo + h * i);
    max_lf = std::max(max_lf, lf[static_cast<std::size_t>(i)]);
  }
  double z = 0.0, mw = 0.0, mlog = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = lo + h * i;
    const double weight = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    const double f = std::exp(lf[static_cast<std::size_t>(i)] - max_lf) * weight;
    z += f;
    mw += f * std::exp(t);
    mlog += f * t;
  }
  return {mw / z, mlog / z};
}

// Marginal density of a scale mixture by quadrature over the mixing
// distribution Gamma(alpha, beta), for a dense covariance.
inline double quadrature_log_pdf(const hdmed::HdEdComponent& c,
                                 const Eigen::Ref<const VectorXd>& y, int points = 20001) {
  const MatrixXd sigma = dense_scale(c);
  const Eigen::LLT<MatrixXd> llt(sigma);
  const VectorXd diff = y - c.mu;
  const double u = diff.dot(llt.solve(diff));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double alpha = c.mixing.alpha;
  const double beta = c.mixing.beta;
  const int m = static_cast<int>(c.dim());

  const double lo = std::log(alpha / beta) - 40.0 / std::sqrt(alpha) - 5.0;
  const double hi = std::log(alpha / beta) + 40.0 / std::sqrt(alpha) + 5.0;
  const int n = points | 1;
  const double h = (hi - lo) / (n - 1);
  // integrand in t = log w: N(y; mu, sigma/w) Gamma(w; alpha, beta) w
  auto log_f = [&](double t) {
    const double w = std::exp(t);
    const double log_normal = -0.5 * m * std::log(2.0 * M_PI) + 0.5 * m * t -
                              0.5 * logdet - 0.5 * w * u;
    const double log_gamma = alpha * std::log(beta) - std::lgamma(alpha) +
                             (alpha - 1.0) * t - beta * w;
    return log_normal + log_gamma + t;
  };
  double max_lf = -std::numeric_limits<double>::infinity();
  std::vector<double> lf(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    lf[static_cast<std::size_t>(i)] = log_f(lo + h * i);
    max_lf = std::max(max_lf, lf[static_cast<std::size_t>(i)]);
  }
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    const double weight = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    z += std::exp(lf[static_cast<std::size_t>(i)] - max_lf) * weight;
  }
  return max_lf + std::log(z * h / 3.0);
}

// Random orthonormal M x d frame.
inline MatrixXd random_frame(Index m, Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd g(m, d);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < d; ++j) g(i, j) = normal(rng);
  }
  const Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(m, d);
  return q;
}

// Random valid component with scales drawn above the trailing floor.
inline hdmed::HdEdComponent random_component(Index m, Index d, hdmed::MixingFamily mixing,
                                             std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  hdmed::HdEdComponent c;
  c.mu = VectorXd::NullaryExpr(m, [&](Index) { return normal(rng); });
  c.dstar = random_frame(m, d, rng);
  c.b = unif(rng) * 0.05;
  VectorXd gaps = VectorXd::NullaryExpr(d, [&](Index) { return unif(rng); });
  c.a.resize(d);
  double acc = c.b;
  for (Index i = d - 1; i >= 0; --i) {
    acc += gaps[i];
    c.a[i] = acc;
  }
  c.mixing = mixing;
  return c;
}

// Adjusted Rand index between two hard labelings.
inline double adjusted_rand_index(const std::vector<Index>& x, const std::vector<Index>& y) {
  const Index kx = 1 + *std::max_element(x.begin(), x.end());
  const Index ky = 1 + *std::max_element(y.begin(), y.end());
  MatrixXd table = MatrixXd::Zero(kx, ky);
  for (std::size_t i = 0; i < x.size(); ++i) table(x[i], y[i]) += 1.0;
  auto choose2 = [](double v) { return 0.5 * v * (v - 1.0); };
  double sum_cells = 0.0;
  for (Index i = 0; i < kx; ++i) {
    for (Index j = 0; j < ky; ++j) sum_cells += choose2(table(i, j));
  }
  double sum_rows = 0.0;
  for (Index i = 0; i < kx; ++i) sum_rows += choose2(table.row(i).sum());
  double sum_cols = 0.0;
  for (Index j = 0; j < ky; ++j) sum_cols += choose2(table.col(j).sum());
  const double total = choose2(static_cast<double>(x.size()));
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (sum_cells - expected) / (max_index - expected);
}

// Smallest singular value of D1^T D2: cos of the largest principal angle.
inline double min_subspace_cosine(const MatrixXd& d1, const MatrixXd& d2) {
  const Eigen::JacobiSVD<MatrixXd> svd(d1.transpose() * d2);
  return svd.singularValues().minCoeff();
}

}  // namespace testutil

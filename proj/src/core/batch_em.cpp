#include "core/batch_em.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace hdmed {
namespace {

double h_of_nu(double nu) { return std::log(0.5 * nu) - digamma(0.5 * nu); }

struct DenseEval {
  Eigen::LLT<MatrixXd> llt;
  double logdet = 0.0;
};

// Factorizes a covariance, nudging it with escalating diagonal jitter if it
// is not positive definite.
DenseEval factorize(MatrixXd& cov) {
  DenseEval ev;
  double jitter = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    MatrixXd work = cov;
    if (jitter > 0.0) work.diagonal().array() += jitter;
    ev.llt.compute(work);
    if (ev.llt.info() == Eigen::Success) {
      if (jitter > 0.0) cov = work;
      ev.logdet = 2.0 * ev.llt.matrixLLT().diagonal().array().log().sum();
      if (std::isfinite(ev.logdet)) return ev;
    }
    const double scale = std::max(cov.trace() / static_cast<double>(cov.rows()), 1e-300);
    jitter = jitter == 0.0 ? 1e-10 * scale : 10.0 * jitter;
  }
  throw NumericalError("batch em: covariance cannot be made positive definite");
}

MixingFamily comp_mixing(const FullCovMixture& m, Index j) {
  return m.family == MixingKind::GammaMix ? MixingFamily::student(m.nu[static_cast<std::size_t>(j)])
                                          : MixingFamily::gaussian();
}

// Log joint (log pi_k + log p_k) for all rows, plus the squared distances.
void dense_logits(const FullCovMixture& m, std::vector<DenseEval>& evals,
                  const Eigen::Ref<const MatrixXd>& rows, MatrixXd* logits, MatrixXd* u_out) {
  const Index n = rows.rows();
  const Index k = m.size();
  const int dim = static_cast<int>(rows.cols());
  logits->resize(n, k);
  if (u_out) u_out->resize(n, k);
  for (Index j = 0; j < k; ++j) {
    const MatrixXd centered =
        rows.rowwise() - m.means[static_cast<std::size_t>(j)].transpose();
    const MatrixXd solved = evals[static_cast<std::size_t>(j)].llt.solve(centered.transpose());
    const VectorXd u =
        (centered.transpose().cwiseProduct(solved)).colwise().sum().transpose();
    const MixingFamily mix = comp_mixing(m, j);
    const double log_w = std::log(m.weights[j]);
    const double half_logdet = 0.5 * evals[static_cast<std::size_t>(j)].logdet;
    for (Index i = 0; i < n; ++i) {
      const double ui = std::max(u[i], 0.0);
      (*logits)(i, j) = generator_eval(mix, ui, dim).log_g - half_logdet + log_w;
      if (u_out) (*u_out)(i, j) = ui;
    }
  }
}

}  // namespace

double solve_degrees_of_freedom(double avg_w, double avg_logw) {
  if (!std::isfinite(avg_w) || !std::isfinite(avg_logw)) {
    throw InvalidArgument("degrees of freedom: moments must be finite");
  }
  constexpr double kLo = 0.1;
  constexpr double kHi = 1000.0;
  const double rhs = avg_w - avg_logw - 1.0;  // >= 0 for admissible moments
  if (rhs <= h_of_nu(kHi)) return kHi;
  if (rhs >= h_of_nu(kLo)) return kLo;
  double lo = kLo;
  double hi = kHi;
  for (int i = 0; i < 200 && (hi - lo) > 1e-13 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (h_of_nu(mid) > rhs) {
      lo = mid;  // h decreasing: still above target, move right
    } else {
      hi = mid;
    }
  }
  double nu = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {
    const double f = h_of_nu(nu) - rhs;
    const double df = 1.0 / nu - 0.5 * trigamma(0.5 * nu);
    const double step = f / df;
    const double next = nu - step;
    if (!(next > kLo) || !(next < kHi)) break;
    nu = next;
  }
  return nu;
}

double log_likelihood_full(const FullCovMixture& m, const Eigen::Ref<const MatrixXd>& rows) {
  std::vector<DenseEval> evals;
  evals.reserve(static_cast<std::size_t>(m.size()));
  std::vector<MatrixXd> covs = m.covariances;
  for (auto& c : covs) evals.push_back(factorize(c));
  MatrixXd logits;
  dense_logits(m, evals, rows, &logits, nullptr);
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    total += log_sum_exp_row(logits.row(i));
  }
  return total;
}

BatchEmResult fit_batch(const Eigen::Ref<const MatrixXd>& data, Index k, MixingKind family,
                        int iterations, std::uint64_t seed, double nu_init) {
  const Index n = data.rows();
  const Index m = data.cols();
  if (k < 1) throw InvalidArgument("batch em: need k >= 1");
  if (n < 2 * k) throw InvalidArgument("batch em: need at least 2k rows");
  if (iterations < 1) throw InvalidArgument("batch em: need at least one iteration");
  if (family == MixingKind::GammaMix && !(nu_init > 0.0)) {
    throw InvalidArgument("batch em: initial degrees of freedom must be > 0");
  }

  // distance-squared weighted center seeding
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Index> centers;
  centers.push_back(static_cast<Index>(rng() % static_cast<std::uint64_t>(n)));
  VectorXd d2 = (data.rowwise() - data.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<Index>(centers.size()) < k) {
    const double total = d2.sum();
    Index pick;
    if (total > 0.0) {
      double target = unif(rng) * total;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        target -= d2[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin((data.rowwise() - data.row(pick)).rowwise().squaredNorm());
  }

  FullCovMixture mix;
  mix.family = family;
  mix.weights = VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  const VectorXd grand_mean = data.colwise().mean().transpose();
  const MatrixXd centered_all = data.rowwise() - grand_mean.transpose();
  MatrixXd global_cov =
      (centered_all.transpose() * centered_all) / static_cast<double>(n);
  global_cov.diagonal().array() += 1e-8 * std::max(global_cov.trace() / static_cast<double>(m), 1e-12);
  for (Index j = 0; j < k; ++j) {
    mix.means.push_back(data.row(centers[static_cast<std::size_t>(j)]).transpose());
    mix.covariances.push_back(global_cov);
    if (family == MixingKind::GammaMix) mix.nu.push_back(nu_init);
  }

  BatchEmResult result;
  MatrixXd logits;
  MatrixXd u;
  for (int it = 0; it < iterations; ++it) {
    std::vector<DenseEval> evals;
    evals.reserve(static_cast<std::size_t>(k));
    for (Index j = 0; j < k; ++j) evals.push_back(factorize(mix.covariances[static_cast<std::size_t>(j)]));
    dense_logits(mix, evals, data, &logits, &u);

    double loglik = 0.0;
    MatrixXd resp(n, k);
    for (Index i = 0; i < n; ++i) {
      const double lse = log_sum_exp_row(logits.row(i));
      if (!std::isfinite(lse)) {
        throw NumericalError("batch em: observation has zero density under every component");
      }
      resp.row(i) = (logits.row(i).array() - lse).exp();
      loglik += lse;
    }
    result.loglik_per_iter.push_back(loglik);

    for (Index j = 0; j < k; ++j) {
      const VectorXd r = resp.col(j);
      const double nk = r.sum();
      if (nk < 1e-10 * static_cast<double>(n)) {
        throw NumericalError("batch em: component " + std::to_string(j) + " collapsed");
      }
      VectorXd ew = VectorXd::Ones(n);
      VectorXd elogw = VectorXd::Zero(n);
      if (family == MixingKind::GammaMix) {
        const MixingFamily fam = comp_mixing(mix, j);
        for (Index i = 0; i < n; ++i) {
          const WeightPosterior wp = weight_posterior(fam, u(i, j), static_cast<int>(m));
          ew[i] = wp.e_w;
          elogw[i] = wp.e_logw;
        }
      }
      const VectorXd rw = r.cwiseProduct(ew);
      const double swk = rw.sum();
      const VectorXd mean = (data.transpose() * rw) / swk;
      const MatrixXd centered = data.rowwise() - mean.transpose();
      const MatrixXd weighted = centered.array().colwise() * rw.array();
      MatrixXd cov = (centered.transpose() * weighted) / nk;
      mix.weights[j] = nk / static_cast<double>(n);
      mix.means[static_cast<std::size_t>(j)] = mean;
      mix.covariances[static_cast<std::size_t>(j)] = 0.5 * (cov + cov.transpose());
      if (family == MixingKind::GammaMix) {
        mix.nu[static_cast<std::size_t>(j)] =
            solve_degrees_of_freedom(rw.sum() / nk, r.dot(elogw) / nk);
      }
    }
  }
  result.mixture = std::move(mix);
  return result;
}

}  // namespace hdmed

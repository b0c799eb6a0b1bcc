#include "core/component.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace hdmed;
using testutil::dense_log_pdf;
using testutil::dense_mahalanobis;
using testutil::dense_scale;
using testutil::random_component;

namespace {

VectorXd random_point(Index m, std::mt19937_64& rng, double spread = 2.0) {
  std::normal_distribution<double> normal(0.0, spread);
  return VectorXd::NullaryExpr(m, [&](Index) { return normal(rng); });
}

}  // namespace

TEST_CASE("reduced mahalanobis equals the dense quadratic form") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 2 + static_cast<Index>(rng() % 11);
    const Index d = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(m));
    const HdEdComponent c = random_component(m, d, MixingFamily::gaussian(), rng);
    for (int rep = 0; rep < 4; ++rep) {
      const VectorXd y = random_point(m, rng);
      const double got = mahalanobis_reduced(c, y);
      const double want = dense_mahalanobis(c, y);
      CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("log det through the reduced parameterization") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = 3 + static_cast<Index>(rng() % 9);
    const Index d = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(m - 1));
    const HdEdComponent c = random_component(m, d, MixingFamily::gaussian(), rng);
    // closed form against the dense eigenvalues
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(dense_scale(c));
    const double dense = es.eigenvalues().array().log().sum();
    CHECK(log_det_scale(c) == doctest::Approx(dense).epsilon(1e-10));
    const double direct = c.a.array().log().sum() +
                          static_cast<double>(m - d) * std::log(c.b);
    CHECK(log_det_scale(c) == doctest::Approx(direct).epsilon(1e-14));
  }
}

TEST_CASE("log density matches the dense oracle for both families") {
  std::mt19937_64 rng(13);
  const MixingFamily fams[] = {MixingFamily::gaussian(), MixingFamily::gamma_mix(1.5, 2.0),
                               MixingFamily::student(5.0)};
  for (const auto& mix : fams) {
    for (int trial = 0; trial < 12; ++trial) {
      const Index m = 2 + static_cast<Index>(rng() % 10);
      const Index d = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(m));
      const HdEdComponent c = random_component(m, d, mix, rng);
      for (int rep = 0; rep < 3; ++rep) {
        const VectorXd y = random_point(m, rng);
        CHECK(log_pdf(c, y) == doctest::Approx(dense_log_pdf(c, y)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("scale mixture density matches direct quadrature over the mixing law") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Index m = 2 + static_cast<Index>(rng() % 4);
    const HdEdComponent c = random_component(m, 1, MixingFamily::gamma_mix(2.2, 1.3), rng);
    const VectorXd y = random_point(m, rng, 1.0);
    CHECK(log_pdf(c, y) == doctest::Approx(testutil::quadrature_log_pdf(c, y)).epsilon(1e-7));
  }
}

TEST_CASE("componentwise posterior equals the family posterior at the distance") {
  std::mt19937_64 rng(15);
  const HdEdComponent c = random_component(7, 3, MixingFamily::student(6.0), rng);
  const VectorXd y = random_point(7, rng);
  const double u = mahalanobis_reduced(c, y);
  const WeightPosterior direct = weight_posterior(c.mixing, u, 7);
  const WeightPosterior via = weight_posterior(c, y);
  CHECK(via.e_w == doctest::Approx(direct.e_w).epsilon(1e-14));
  CHECK(via.e_logw == doctest::Approx(direct.e_logw).epsilon(1e-14));
}

TEST_CASE("row batch kernels agree with the scalar versions") {
  std::mt19937_64 rng(16);
  const HdEdComponent c = random_component(9, 4, MixingFamily::gamma_mix(3.0, 2.0), rng);
  MatrixXd rows(17, 9);
  for (Index i = 0; i < rows.rows(); ++i) rows.row(i) = random_point(9, rng).transpose();
  const VectorXd u = mahalanobis_reduced_rows(c, rows);
  const VectorXd lp = log_pdf_rows(c, rows);
  REQUIRE(u.size() == 17);
  REQUIRE(lp.size() == 17);
  for (Index i = 0; i < 17; ++i) {
    CHECK(u[i] == doctest::Approx(mahalanobis_reduced(c, rows.row(i).transpose())).epsilon(1e-11));
    CHECK(lp[i] == doctest::Approx(log_pdf(c, rows.row(i).transpose())).epsilon(1e-11));
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  std::mt19937_64 rng(17);
  const HdEdComponent c = random_component(6, 2, MixingFamily::gaussian(), rng);
  const MatrixXd s1 = sample_component(c, 50, 99);
  const MatrixXd s2 = sample_component(c, 50, 99);
  const MatrixXd s3 = sample_component(c, 50, 100);
  CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s1 - s3).cwiseAbs().maxCoeff() > 0.0);
  CHECK(s1.rows() == 50);
  CHECK(s1.cols() == 6);
}

TEST_CASE("sample moments approach the component parameters") {
  std::mt19937_64 rng(18);
  HdEdComponent c = random_component(5, 2, MixingFamily::gaussian(), rng);
  c.a << 6.0, 3.0;
  c.b = 0.4;
  const Index n = 60000;
  const MatrixXd s = sample_component(c, n, 4242);
  const VectorXd mean = s.colwise().mean().transpose();
  CHECK((mean - c.mu).norm() < 0.08);
  const MatrixXd centered = s.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const MatrixXd want = dense_scale(c);
  CHECK((cov - want).norm() / want.norm() < 0.05);
}

TEST_CASE("student samples scale the covariance by nu / (nu - 2)") {
  std::mt19937_64 rng(19);
  HdEdComponent c = random_component(4, 1, MixingFamily::student(8.0), rng);
  c.mu.setZero();
  const Index n = 120000;
  const MatrixXd s = sample_component(c, n, 31);
  const MatrixXd cov = s.transpose() * s / static_cast<double>(n);
  const MatrixXd want = dense_scale(c) * (8.0 / 6.0);
  CHECK((cov - want).norm() / want.norm() < 0.06);
}

TEST_CASE("component validation rejects broken parameter sets") {
  std::mt19937_64 rng(20);
  const HdEdComponent good = random_component(6, 2, MixingFamily::gaussian(), rng);
  CHECK_NOTHROW(good.validate());

  HdEdComponent c = good;
  c.b = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  c = good;
  c.a[1] = c.b;  // leading scales must stay strictly above b
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  c = good;
  std::swap(c.a[0], c.a[1]);  // must be non-increasing
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  c = good;
  c.dstar(0, 0) += 0.01;  // breaks orthonormality
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  c = good;
  c.a.resize(3);  // rank mismatch with the basis
  c.a << 5.0, 4.0, 3.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);

  c = good;
  c.mixing.kind = MixingKind::GammaMix;
  c.mixing.alpha = -1.0;
  c.mixing.beta = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("full rank components are accepted and exact") {
  // the lossless setup used by the matching layer
  const Index m = 4;
  HdEdComponent c;
  c.mu = VectorXd::Constant(m, 0.5);
  c.dstar = MatrixXd::Identity(m, m);
  c.a = VectorXd::Constant(m, 2.0);
  c.b = 1.0;
  c.mixing = MixingFamily::gaussian();
  CHECK_NOTHROW(c.validate());
  VectorXd y(m);
  y << 1.0, -3.0, 0.25, 2.0;
  CHECK(mahalanobis_reduced(c, y) ==
        doctest::Approx((y - c.mu).squaredNorm() / 2.0).epsilon(1e-12));
  CHECK(log_det_scale(c) == doctest::Approx(m * std::log(2.0)).epsilon(1e-14));
}

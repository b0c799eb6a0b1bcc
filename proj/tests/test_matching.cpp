#include "core/matching.hpp"

#include "core/projection.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace hdmed;
using testutil::random_component;
using testutil::spit;
using testutil::temp_path;

namespace {

// lossless single cluster archive: identity basis, a = 2, b = 1, so the
// latent table is just the centered dictionary halved
struct LosslessSetup {
  MatrixXd signals;
  MatrixXd params;
  HdMedModel model;
  CompressedDictionary archive;
  DictionaryStore store = DictionaryStore::from_memory(MatrixXd(0, 1), MatrixXd(0, 0));
};

LosslessSetup lossless_setup(Index n, Index m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LosslessSetup s;
  s.signals.resize(n, m);
  for (Index i = 0; i < s.signals.size(); ++i) s.signals(i / m, i % m) = normal(rng);
  s.params.resize(n, 1);
  for (Index i = 0; i < n; ++i) s.params(i, 0) = static_cast<double>(i) * 0.5;

  HdEdComponent c;
  c.mu = VectorXd::Zero(m);
  c.dstar = MatrixXd::Identity(m, m);
  c.a = VectorXd::Constant(m, 2.0);
  c.b = 1.0;
  c.mixing = MixingFamily::gaussian();
  s.model.components = {c};
  s.model.weights = VectorXd::Ones(1);
  s.model.validate();

  s.store = DictionaryStore::from_memory(s.signals, s.params);
  s.archive = compress(s.store, s.model, false, ScalarType::F64);
  return s;
}

// brute force nearest rows in the original space
std::uint64_t brute_force_nn(const MatrixXd& signals, const VectorXd& q) {
  Index best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < signals.rows(); ++j) {
    const double dist = (signals.row(j).transpose() - q).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = j;
    }
  }
  return static_cast<std::uint64_t>(best);
}

}  // namespace

TEST_CASE("the lossless configuration reproduces exhaustive matching") {
  const LosslessSetup s = lossless_setup(300, 6, 121);
  std::mt19937_64 rng(122);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd queries(40, 6);
  for (Index i = 0; i < queries.size(); ++i) queries(i / 6, i % 6) = normal(rng);

  MatchStats full_stats, routed_stats;
  const auto full = full_match(s.store, queries, {}, &full_stats);
  const auto routed = match_compressed(s.archive, queries, {}, &routed_stats);
  REQUIRE(full.size() == 40);
  REQUIRE(routed.size() == 40);
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(full[i].cluster == -1);
    CHECK(routed[i].cluster == 0);
    CHECK(full[i].dict_index == routed[i].dict_index);
    CHECK(full[i].dict_index ==
          brute_force_nn(s.signals, queries.row(static_cast<Index>(i)).transpose()));
    // latent coordinates are the centered signals halved, so squared
    // distances shrink by exactly four
    CHECK(routed[i].distance == doctest::Approx(full[i].distance / 4.0).epsilon(1e-9));
    CHECK((full[i].params - routed[i].params).cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(routed[i].fallback);
  }

  // instrumented work: every query scans everything
  CHECK(full_stats.multiply_adds == 40ULL * 300ULL * 6ULL);
  CHECK(routed_stats.multiply_adds == 40ULL * 300ULL * 6ULL);
  CHECK(routed_stats.fallbacks == 0);
}

TEST_CASE("distance ties break to the lowest dictionary index") {
  MatrixXd signals(5, 3);
  signals << 1.0, 2.0, 3.0,
      4.0, 5.0, 6.0,
      1.0, 2.0, 3.0,  // duplicate of row 0
      7.0, 8.0, 9.0,
      4.0, 5.0, 6.0;  // duplicate of row 1
  MatrixXd params(5, 1);
  params << 0.0, 1.0, 2.0, 3.0, 4.0;
  const auto store = DictionaryStore::from_memory(signals, params);

  MatrixXd queries(2, 3);
  queries << 1.0, 2.0, 3.0, 4.1, 5.0, 6.0;
  const auto full = full_match(store, queries);
  CHECK(full[0].dict_index == 0);
  CHECK(full[0].params[0] == 0.0);
  CHECK(full[1].dict_index == 1);

  // same through the lossless latent path
  HdEdComponent c;
  c.mu = VectorXd::Zero(3);
  c.dstar = MatrixXd::Identity(3, 3);
  c.a = VectorXd::Constant(3, 2.0);
  c.b = 1.0;
  HdMedModel model;
  model.components = {c};
  model.weights = VectorXd::Ones(1);
  const auto archive = compress(store, model, false, ScalarType::F64);
  const auto routed = match_compressed(archive, queries);
  CHECK(routed[0].dict_index == 0);
  CHECK(routed[1].dict_index == 1);
}

TEST_CASE("routed matching scans only the responsible cluster") {
  std::mt19937_64 rng(123);
  HdMedModel model;
  model.components.push_back(random_component(8, 2, MixingFamily::gaussian(), rng));
  model.components.push_back(random_component(8, 2, MixingFamily::gaussian(), rng));
  model.components[0].mu = VectorXd::Zero(8);
  model.components[1].mu = VectorXd::Constant(8, 10.0);
  model.weights = VectorXd::Constant(2, 0.5);
  model.validate();

  const Index n = 240;
  MatrixXd signals(n, 8);
  signals.topRows(n / 2) = sample_component(model.components[0], n / 2, 7);
  signals.bottomRows(n / 2) = sample_component(model.components[1], n / 2, 8);
  MatrixXd params(n, 1);
  for (Index i = 0; i < n; ++i) params(i, 0) = static_cast<double>(i);
  const auto store = DictionaryStore::from_memory(signals, params);
  const auto archive = compress(store, model, false, ScalarType::F64);
  REQUIRE(archive.clusters[0].size() > 0);
  REQUIRE(archive.clusters[1].size() > 0);

  // queries pinned deep inside each cluster
  MatrixXd queries(2, 8);
  queries.row(0) = signals.row(3);
  queries.row(1) = signals.row(n - 4);

  MatchStats stats;
  const auto res = match_compressed(archive, queries, {}, &stats);
  CHECK(res[0].cluster == 0);
  CHECK(res[1].cluster == 1);

  // the latent nearest neighbor of a stored row is that row itself
  CHECK(res[0].dict_index == 3);
  CHECK(res[1].dict_index == static_cast<std::uint64_t>(n - 4));
  CHECK(res[0].distance == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(res[0].params[0] == 3.0);

  // instrumented work: one cluster each
  const auto n0 = static_cast<std::uint64_t>(archive.clusters[0].size());
  const auto n1 = static_cast<std::uint64_t>(archive.clusters[1].size());
  const auto d0 = static_cast<std::uint64_t>(archive.clusters[0].reduced.cols());
  const auto d1 = static_cast<std::uint64_t>(archive.clusters[1].reduced.cols());
  CHECK(stats.multiply_adds == n0 * d0 + n1 * d1);
}

TEST_CASE("several routed clusters are resolved through reconstruction") {
  std::mt19937_64 rng(124);
  HdMedModel model;
  model.components.push_back(random_component(6, 2, MixingFamily::gaussian(), rng));
  model.components.push_back(random_component(6, 2, MixingFamily::gaussian(), rng));
  model.components[0].mu = VectorXd::Zero(6);
  model.components[1].mu = VectorXd::Constant(6, 4.0);  // moderate separation
  model.weights = VectorXd::Constant(2, 0.5);
  model.validate();

  const Index n = 300;
  MatrixXd signals(n, 6);
  signals.topRows(n / 2) = sample_component(model.components[0], n / 2, 17);
  signals.bottomRows(n / 2) = sample_component(model.components[1], n / 2, 18);
  MatrixXd params(n, 1);
  for (Index i = 0; i < n; ++i) params(i, 0) = static_cast<double>(i);
  const auto store = DictionaryStore::from_memory(signals, params);
  const auto archive = compress(store, model, false, ScalarType::F64);

  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd queries(50, 6);
  for (Index i = 0; i < 50; ++i) {
    // points between the clusters so both collect responsibility
    const double t = static_cast<double>(i) / 49.0;
    for (Index j = 0; j < 6; ++j) queries(i, j) = 4.0 * t + 0.8 * normal(rng);
  }

  MatchOptions opt;
  opt.top_clusters = 2;
  const auto got = match_compressed(archive, queries, opt);

  // reference: replicate the documented procedure directly
  const MatrixXd resp = responsibilities_rows(model, queries);
  std::vector<ProjectionOperator> ops;
  for (const auto& c : model.components) ops.push_back(loading_matrix(c));
  for (Index i = 0; i < 50; ++i) {
    std::vector<Index> order{0, 1};
    std::stable_sort(order.begin(), order.end(),
                     [&](Index x, Index y) { return resp(i, x) > resp(i, y); });
    double best_recon = std::numeric_limits<double>::infinity();
    Index best_cluster = -1;
    std::uint64_t best_index = 0;
    for (const Index c : order) {
      const auto& cl = archive.clusters[static_cast<std::size_t>(c)];
      const VectorXd xq = project(ops[static_cast<std::size_t>(c)], queries.row(i).transpose());
      Index local = 0;
      double local_best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < cl.size(); ++j) {
        const double dist = (cl.reduced.row(j).transpose() - xq).squaredNorm();
        if (dist < local_best) {
          local_best = dist;
          local = j;
        }
      }
      const VectorXd recon =
          reconstruct(ops[static_cast<std::size_t>(c)], cl.reduced.row(local).transpose());
      const double rd = (queries.row(i).transpose() - recon).squaredNorm();
      if (rd < best_recon) {
        best_recon = rd;
        best_cluster = c;
        best_index = cl.indices[static_cast<std::size_t>(local)];
      }
    }
    CHECK(got[static_cast<std::size_t>(i)].cluster == best_cluster);
    CHECK(got[static_cast<std::size_t>(i)].dict_index == best_index);
  }
}

TEST_CASE("an empty best cluster falls back to the next one") {
  std::mt19937_64 rng(125);
  HdMedModel model;
  model.components.push_back(random_component(5, 1, MixingFamily::gaussian(), rng));
  model.components.push_back(random_component(5, 1, MixingFamily::gaussian(), rng));
  model.components[0].mu = VectorXd::Zero(5);
  model.components[1].mu = VectorXd::Constant(5, 20.0);
  model.weights = VectorXd::Constant(2, 0.5);
  model.validate();

  // dictionary drawn only from the first component: cluster 1 stays empty
  const MatrixXd signals = sample_component(model.components[0], 100, 9);
  MatrixXd params = MatrixXd::Zero(100, 1);
  const auto store = DictionaryStore::from_memory(signals, params);
  const auto archive = compress(store, model, false, ScalarType::F64);
  REQUIRE(archive.clusters[1].size() == 0);

  // a query sitting on the empty component's center
  MatrixXd queries(1, 5);
  queries.row(0) = VectorXd::Constant(5, 20.0).transpose();

  MatchStats stats;
  const auto res = match_compressed(archive, queries, {}, &stats);
  CHECK(res[0].fallback);
  CHECK(res[0].cluster == 0);
  CHECK(stats.fallbacks == 1);
}

TEST_CASE("parameter mean absolute error per column") {
  std::vector<MatchResult> matches(3);
  matches[0].query = 0;
  matches[0].params = VectorXd::Zero(2);
  matches[0].params << 1.0, 10.0;
  matches[1].query = 1;
  matches[1].params = VectorXd::Zero(2);
  matches[1].params << 2.0, 30.0;
  matches[2].query = 2;
  matches[2].params = VectorXd::Zero(2);
  matches[2].params << 5.0, 0.0;

  MatrixXd reference(3, 2);
  reference << 1.5, 12.0,
      2.0, 26.0,
      4.0, 2.0;
  const VectorXd mae = match_mae(matches, reference);
  REQUIRE(mae.size() == 2);
  CHECK(mae[0] == doctest::Approx((0.5 + 0.0 + 1.0) / 3.0).epsilon(1e-14));
  CHECK(mae[1] == doctest::Approx((2.0 + 4.0 + 2.0) / 3.0).epsilon(1e-14));

  // shape violations
  CHECK_THROWS_AS((void)match_mae(matches, MatrixXd::Zero(3, 3)), InvalidArgument);
  CHECK_THROWS_AS((void)match_mae(matches, MatrixXd::Zero(2, 2)), InvalidArgument);
}

TEST_CASE("match tables round trip through csv") {
  const LosslessSetup s = lossless_setup(50, 4, 126);
  std::mt19937_64 rng(127);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd queries(7, 4);
  for (Index i = 0; i < queries.size(); ++i) queries(i / 4, i % 4) = normal(rng);

  const auto full = full_match(s.store, queries);
  const std::string path = temp_path("matches.csv");
  write_matches_csv(path, full, 1);
  const auto back = read_matches_csv(path);
  REQUIRE(back.size() == full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(back[i].query == full[i].query);
    CHECK(back[i].cluster == -1);
    CHECK(back[i].dict_index == full[i].dict_index);
    CHECK(back[i].distance == full[i].distance);  // %.17g survives exactly
    CHECK((back[i].params - full[i].params).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("match csv rejects malformed tables") {
  SUBCASE("wrong header") {
    const std::string path = temp_path("bad_header.csv");
    spit(path, "query,cluster,dict_index,distance,t_0\n0,0,0,0,0\n");
    CHECK_THROWS_AS((void)read_matches_csv(path), FormatError);
  }
  SUBCASE("bad number") {
    const std::string path = temp_path("bad_value.csv");
    spit(path, "query_id,cluster,dict_index,distance,t_0\n0,0,zero,0,0\n");
    try {
      (void)read_matches_csv(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("negative dictionary index") {
    const std::string path = temp_path("bad_index.csv");
    spit(path, "query_id,cluster,dict_index,distance,t_0\n0,0,-4,0,0\n");
    CHECK_THROWS_AS((void)read_matches_csv(path), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS((void)read_matches_csv(temp_path("ghost.csv")), IoError);
  }
}

TEST_CASE("normalized exhaustive matching scales both sides") {
  // two dictionary rows with the same direction, different lengths: after
  // normalization the query is equidistant, so the lower index wins
  MatrixXd signals(2, 3);
  signals << 1.0, 0.0, 0.0,
      5.0, 0.0, 0.0;
  const auto store = DictionaryStore::from_memory(signals, MatrixXd::Zero(2, 1));
  MatrixXd queries(1, 3);
  queries << 3.5, 0.0, 0.0;

  MatchOptions opt;
  opt.normalize = true;
  const auto res = full_match(store, queries, opt);
  CHECK(res[0].dict_index == 0);
  CHECK(res[0].distance == doctest::Approx(0.0));

  // without normalization the closer length wins
  const auto raw = full_match(store, queries);
  CHECK(raw[0].dict_index == 1);
  CHECK(raw[0].distance == doctest::Approx(2.25));
}

TEST_CASE("match input contract") {
  const LosslessSetup s = lossless_setup(20, 4, 128);
  MatrixXd queries(2, 5);  // wrong width
  queries.setZero();
  CHECK_THROWS_AS((void)full_match(s.store, queries), InvalidArgument);
  CHECK_THROWS_AS((void)match_compressed(s.archive, queries), InvalidArgument);

  MatchOptions opt;
  opt.top_clusters = 0;
  CHECK_THROWS_AS((void)match_compressed(s.archive, MatrixXd::Zero(1, 4), opt),
                  InvalidArgument);
}

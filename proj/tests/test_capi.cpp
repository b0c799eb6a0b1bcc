// Exercises the shared-library C interface end to end: status mapping,
// probing, the full generate/fit/compress/match pipeline, and the
// error-reporting contract.
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdmed.h"

#include "core/dictionary.hpp"
#include "test_util.hpp"

using Eigen::MatrixXd;

namespace {

std::string write_bytes(const std::string& name, const std::string& bytes) {
  const std::string path = testutil::temp_path(name);
  testutil::spit(path, bytes);
  return path;
}

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("version and status names") {
  const char* v = hdmed_version();
  REQUIRE(v != nullptr);
  CHECK(std::string(v).find('.') != std::string::npos);

  CHECK(std::string(hdmed_status_name(HDMED_OK)) == "ok");
  CHECK(std::string(hdmed_status_name(HDMED_ERR_ARGUMENT)) == "argument");
  CHECK(std::string(hdmed_status_name(HDMED_ERR_IO)) == "io");
  CHECK(std::string(hdmed_status_name(HDMED_ERR_FORMAT)) == "format");
  CHECK(std::string(hdmed_status_name(HDMED_ERR_NUMERIC)) == "numeric");
  CHECK(std::string(hdmed_status_name(static_cast<hdmed_status>(99))) == "unknown");
}

TEST_CASE("null arguments come back as argument errors with a message") {
  hdmed_file_kind kind = HDMED_FILE_UNKNOWN;
  CHECK(hdmed_probe_file(nullptr, &kind) == HDMED_ERR_ARGUMENT);
  CHECK(std::string(hdmed_last_error()).size() > 0);

  hdmed_dict* d = nullptr;
  CHECK(hdmed_dict_open(nullptr, &d) == HDMED_ERR_ARGUMENT);
  CHECK(d == nullptr);

  hdmed_model* m = nullptr;
  CHECK(hdmed_model_load(nullptr, &m) == HDMED_ERR_ARGUMENT);

  int64_t knee = 0;
  CHECK(hdmed_kneedle(nullptr, 4, 1.0, &knee) == HDMED_ERR_ARGUMENT);

  double frac = 0.0;
  CHECK(hdmed_match_agreement(nullptr, "x", &frac) == HDMED_ERR_ARGUMENT);
}

TEST_CASE("missing and malformed files map to io and format errors") {
  hdmed_dict* d = nullptr;
  CHECK(hdmed_dict_open("/nonexistent/path/q.bin", &d) == HDMED_ERR_IO);
  CHECK(std::string(hdmed_last_error()).size() > 0);

  hdmed_file_kind kind = HDMED_FILE_DICT;
  CHECK(hdmed_probe_file("/nonexistent/path/q.bin", &kind) == HDMED_ERR_IO);

  const std::string junk = write_bytes("capi_junk.bin", "this is not a dictionary");
  CHECK(hdmed_probe_file(junk.c_str(), &kind) == HDMED_OK);
  CHECK(kind == HDMED_FILE_UNKNOWN);
  CHECK(hdmed_dict_open(junk.c_str(), &d) == HDMED_ERR_FORMAT);
  CHECK(d == nullptr);

  hdmed_model* m = nullptr;
  CHECK(hdmed_model_load(junk.c_str(), &m) == HDMED_ERR_FORMAT);
  hdmed_compressed* c = nullptr;
  CHECK(hdmed_compressed_open(junk.c_str(), &c) == HDMED_ERR_FORMAT);
}

TEST_CASE("kneedle wrapper") {
  const std::vector<double> curve = {10.0, 9.5, 9.0, 1.0, 0.9, 0.8};
  int64_t knee = -7;
  REQUIRE(hdmed_kneedle(curve.data(), curve.size(), 1.0, &knee) == HDMED_OK);
  CHECK(knee == 3);

  const std::vector<double> line = {5.0, 4.0, 3.0, 2.0, 1.0};
  REQUIRE(hdmed_kneedle(line.data(), line.size(), 1.0, &knee) == HDMED_OK);
  CHECK(knee == -1);

  CHECK(hdmed_kneedle(curve.data(), 2, 1.0, &knee) == HDMED_ERR_ARGUMENT);
  CHECK(hdmed_kneedle(curve.data(), curve.size(), -2.0, &knee) == HDMED_ERR_ARGUMENT);
}

TEST_CASE("csv import and probe") {
  const std::string csv = write_bytes("capi_in.csv",
                                      "y_0,y_1,t_0\n"
                                      "1.0,2.0,0.5\n"
                                      "-3.0,4.5,0.75\n");
  hdmed_file_kind kind = HDMED_FILE_UNKNOWN;
  REQUIRE(hdmed_probe_file(csv.c_str(), &kind) == HDMED_OK);
  CHECK(kind == HDMED_FILE_CSV);

  const std::string bin = testutil::temp_path("capi_in.bin");
  REQUIRE(hdmed_import_csv(csv.c_str(), bin.c_str(), 1) == HDMED_OK);

  hdmed_dict* d = nullptr;
  REQUIRE(hdmed_dict_open(bin.c_str(), &d) == HDMED_OK);
  hdmed_dict_info info{};
  REQUIRE(hdmed_dict_info_get(d, &info) == HDMED_OK);
  CHECK(info.rows == 2);
  CHECK(info.signal_dim == 2);
  CHECK(info.param_dim == 1);
  CHECK(info.is_f64 == 1);

  std::vector<double> sig(2 * 2, 0.0), par(2 * 1, 0.0);
  REQUIRE(hdmed_dict_read(d, 0, 2, sig.data(), par.data()) == HDMED_OK);
  CHECK(sig[0] == 1.0);
  CHECK(sig[1] == 2.0);
  CHECK(sig[2] == -3.0);
  CHECK(sig[3] == 4.5);
  CHECK(par[0] == 0.5);
  CHECK(par[1] == 0.75);

  CHECK(hdmed_dict_read(d, 1, 5, sig.data(), nullptr) == HDMED_ERR_ARGUMENT);
  hdmed_dict_close(d);
}

TEST_CASE("pipeline: generate, fit, persist, compress, match") {
  // Small two-parameter grid, 64 rows of 16 samples each.
  hdmed_param_range ranges[2] = {{0.05, 0.40, 8}, {1.0, 3.0, 8}};
  hdmed_synth_spec spec{};
  spec.signal_dim = 16;
  spec.param_count = 2;
  spec.params = ranges;
  spec.noise_sd = 0.02;
  spec.seed = 7;
  spec.use_f64 = 1;

  const std::string dict_path = testutil::temp_path("capi_dict.bin");
  REQUIRE(hdmed_generate_dictionary(&spec, dict_path.c_str()) == HDMED_OK);

  hdmed_file_kind kind = HDMED_FILE_UNKNOWN;
  REQUIRE(hdmed_probe_file(dict_path.c_str(), &kind) == HDMED_OK);
  CHECK(kind == HDMED_FILE_DICT);

  hdmed_dict* dict = nullptr;
  REQUIRE(hdmed_dict_open(dict_path.c_str(), &dict) == HDMED_OK);
  hdmed_dict_info dinfo{};
  REQUIRE(hdmed_dict_info_get(dict, &dinfo) == HDMED_OK);
  CHECK(dinfo.rows == 64);
  CHECK(dinfo.signal_dim == 16);
  CHECK(dinfo.param_dim == 2);

  // Row reads agree with the in-process reader.
  {
    auto store = hdmed::DictionaryStore::open(dict_path);
    MatrixXd sig_ref, par_ref;
    store.read_rows(5, 3, &sig_ref, &par_ref);
    std::vector<double> sig(3 * 16, 0.0), par(3 * 2, 0.0);
    REQUIRE(hdmed_dict_read(dict, 5, 3, sig.data(), par.data()) == HDMED_OK);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 16; ++j) CHECK(sig[i * 16 + j] == sig_ref(i, j));
      for (int j = 0; j < 2; ++j) CHECK(par[i * 2 + j] == par_ref(i, j));
    }
  }

  hdmed_fit_options opt{};
  hdmed_fit_options_init(&opt);
  CHECK(opt.components == 1);
  CHECK(opt.kappa > 0.5);
  opt.components = 2;
  opt.heavy_tailed = 0;
  opt.batch_size = 32;
  opt.passes = 3;
  opt.seed = 11;
  opt.init_rows = 48;
  opt.init_iterations = 8;
  opt.max_rank = 3;
  opt.recover_on_collapse = 1;
  opt.threads = 1;
  opt.heldout_fraction = 0.1;
  opt.report_every = 1;

  const std::string report_path = testutil::temp_path("capi_report.csv");
  hdmed_fit_summary summary{};
  hdmed_model* model = nullptr;
  REQUIRE(hdmed_fit(dict, &opt, report_path.c_str(), &summary, &model) == HDMED_OK);
  REQUIRE(model != nullptr);
  // ceil(0.1 * 64) rows are held out of each pass
  CHECK(summary.heldout_rows == 7);
  CHECK(summary.trained_rows == 3 * 57);
  CHECK(std::isfinite(summary.final_heldout_loglik));

  {
    std::ifstream rep(report_path);
    REQUIRE(rep.good());
    std::string header;
    std::getline(rep, header);
    CHECK(header == "step,gamma,heldout_loglik,min_mass");
  }

  hdmed_model_info minfo{};
  REQUIRE(hdmed_model_info_get(model, &minfo) == HDMED_OK);
  CHECK(minfo.components == 2);
  CHECK(minfo.signal_dim == 16);
  CHECK(minfo.heavy_tailed == 0);

  double weight_sum = 0.0;
  int64_t expect_free = minfo.components - 1;
  for (uint32_t k = 0; k < minfo.components; ++k) {
    hdmed_component_info ci{};
    REQUIRE(hdmed_model_component(model, k, &ci) == HDMED_OK);
    CHECK(ci.weight > 0.0);
    CHECK(ci.rank >= 1);
    CHECK(ci.rank <= 3);
    CHECK(ci.b > 0.0);
    CHECK(ci.nu == 0.0);
    weight_sum += ci.weight;
    const int64_t M = 16, d = ci.rank;
    expect_free += M + d * M - d * (d + 1) / 2 + d + 1;
  }
  CHECK(weight_sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(minfo.free_parameters == expect_free);
  hdmed_component_info ci{};
  CHECK(hdmed_model_component(model, 9, &ci) == HDMED_ERR_ARGUMENT);

  // Scores and the information criterion tie together.
  double ll = 0.0, bic = 0.0;
  REQUIRE(hdmed_log_likelihood(model, dict, 1, &ll) == HDMED_OK);
  REQUIRE(hdmed_bic(model, dict, 1, &bic) == HDMED_OK);
  CHECK(std::isfinite(ll));
  CHECK(bic == doctest::Approx(-2.0 * ll +
                               static_cast<double>(minfo.free_parameters) *
                                   std::log(64.0))
                   .epsilon(1e-10));

  double rmse = -1.0, norm = -1.0;
  REQUIRE(hdmed_reconstruction_error(model, dict, 1, &rmse, &norm) == HDMED_OK);
  CHECK(rmse >= 0.0);
  CHECK(std::isfinite(rmse));
  CHECK(norm > 0.0);

  // Save, reload, and save again: canonical bytes round trip.
  const std::string model_path = testutil::temp_path("capi_model.bin");
  REQUIRE(hdmed_model_save(model, model_path.c_str()) == HDMED_OK);
  REQUIRE(hdmed_probe_file(model_path.c_str(), &kind) == HDMED_OK);
  CHECK(kind == HDMED_FILE_MODEL);

  hdmed_model* loaded = nullptr;
  REQUIRE(hdmed_model_load(model_path.c_str(), &loaded) == HDMED_OK);
  double ll2 = 0.0;
  REQUIRE(hdmed_log_likelihood(loaded, dict, 1, &ll2) == HDMED_OK);
  CHECK(ll2 == doctest::Approx(ll).epsilon(1e-14));
  const std::string model_path2 = testutil::temp_path("capi_model2.bin");
  REQUIRE(hdmed_model_save(loaded, model_path2.c_str()) == HDMED_OK);
  CHECK(testutil::slurp(model_path) == testutil::slurp(model_path2));
  hdmed_model_free(loaded);

  // Opening across formats is rejected.
  hdmed_dict* wrong = nullptr;
  CHECK(hdmed_dict_open(model_path.c_str(), &wrong) == HDMED_ERR_FORMAT);
  hdmed_model* wrongm = nullptr;
  CHECK(hdmed_model_load(dict_path.c_str(), &wrongm) == HDMED_ERR_FORMAT);

  // Compress and inspect the archive.
  const std::string arc_path = testutil::temp_path("capi_arc.bin");
  REQUIRE(hdmed_compress(dict, model, 0, 1, 1, arc_path.c_str()) == HDMED_OK);
  REQUIRE(hdmed_probe_file(arc_path.c_str(), &kind) == HDMED_OK);
  CHECK(kind == HDMED_FILE_COMPRESSED);

  hdmed_compressed* arc = nullptr;
  REQUIRE(hdmed_compressed_open(arc_path.c_str(), &arc) == HDMED_OK);
  hdmed_compressed_info ainfo{};
  REQUIRE(hdmed_compressed_info_get(arc, &ainfo) == HDMED_OK);
  CHECK(ainfo.rows == 64);
  CHECK(ainfo.signal_dim == 16);
  CHECK(ainfo.param_dim == 2);
  CHECK(ainfo.components == 2);
  CHECK(ainfo.normalized == 0);
  CHECK(ainfo.is_f64 == 1);
  CHECK(ainfo.compression_ratio > 1.0);

  uint64_t member_total = 0, stored = 0;
  for (uint32_t k = 0; k < ainfo.components; ++k) {
    uint64_t rows = 0;
    uint32_t rank = 0;
    REQUIRE(hdmed_compressed_cluster(arc, k, &rows, &rank) == HDMED_OK);
    member_total += rows;
    stored += rows * rank;
    CHECK(rank >= 1);
  }
  CHECK(member_total == 64);
  CHECK(stored == ainfo.stored_values);
  uint64_t rows_oob = 0;
  uint32_t rank_oob = 0;
  CHECK(hdmed_compressed_cluster(arc, 9, &rows_oob, &rank_oob) == HDMED_ERR_ARGUMENT);

  hdmed_model* embedded = nullptr;
  REQUIRE(hdmed_compressed_model(arc, &embedded) == HDMED_OK);
  hdmed_model_info einfo{};
  REQUIRE(hdmed_model_info_get(embedded, &einfo) == HDMED_OK);
  CHECK(einfo.components == minfo.components);
  CHECK(einfo.signal_dim == minfo.signal_dim);
  CHECK(einfo.free_parameters == minfo.free_parameters);
  hdmed_model_free(embedded);

  // Match the dictionary against itself, exhaustively and through the
  // archive; every query should land on its own row.
  hdmed_match_options mopt{};
  hdmed_match_options_init(&mopt);
  CHECK(mopt.top_clusters == 1);
  mopt.threads = 1;

  const std::string full_csv = testutil::temp_path("capi_full.csv");
  hdmed_match_stats fstats{};
  REQUIRE(hdmed_full_match(dict, dict, &mopt, full_csv.c_str(), &fstats) == HDMED_OK);
  CHECK(fstats.multiply_adds == 64ull * 64ull * 16ull);
  CHECK(fstats.fallbacks == 0);

  mopt.top_clusters = 2;
  const std::string routed_csv = testutil::temp_path("capi_routed.csv");
  hdmed_match_stats rstats{};
  REQUIRE(hdmed_match(arc, dict, &mopt, routed_csv.c_str(), &rstats) == HDMED_OK);
  CHECK(rstats.multiply_adds > 0);
  CHECK(rstats.multiply_adds < fstats.multiply_adds);

  REQUIRE(hdmed_probe_file(routed_csv.c_str(), &kind) == HDMED_OK);
  CHECK(kind == HDMED_FILE_CSV);

  double frac = 0.0;
  REQUIRE(hdmed_match_agreement(full_csv.c_str(), full_csv.c_str(), &frac) == HDMED_OK);
  CHECK(frac == 1.0);
  REQUIRE(hdmed_match_agreement(full_csv.c_str(), routed_csv.c_str(), &frac) == HDMED_OK);
  CHECK(frac == doctest::Approx(1.0));

  // Self-matches carry the true parameters, so the error is zero against
  // both the dictionary truth and the other match file.
  double mae[2] = {-1.0, -1.0};
  uint32_t width = 2;
  REQUIRE(hdmed_match_mae(routed_csv.c_str(), dict_path.c_str(), mae, &width) == HDMED_OK);
  CHECK(width == 2);
  CHECK(mae[0] == doctest::Approx(0.0));
  CHECK(mae[1] == doctest::Approx(0.0));
  width = 2;
  REQUIRE(hdmed_match_mae(routed_csv.c_str(), full_csv.c_str(), mae, &width) == HDMED_OK);
  CHECK(mae[0] == doctest::Approx(0.0));
  width = 1;
  CHECK(hdmed_match_mae(routed_csv.c_str(), dict_path.c_str(), mae, &width) ==
        HDMED_ERR_ARGUMENT);

  hdmed_compressed_close(arc);
  hdmed_model_free(model);
  hdmed_dict_close(dict);
}

}  // TEST_SUITE

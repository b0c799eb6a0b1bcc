#include "hdmed.h"

#include "core/compress.hpp"
#include "core/dictionary.hpp"
#include "core/kneedle.hpp"
#include "core/matching.hpp"
#include "core/mixture.hpp"
#include "core/model_io.hpp"
#include "core/online_em.hpp"
#include "core/projection.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <new>
#include <string>
#include <utility>
#include <vector>

using hdmed::Index;
using hdmed::MatrixXd;
using hdmed::VectorXd;

struct hdmed_dict {
  hdmed::DictionaryStore store;
};

struct hdmed_model {
  hdmed::HdMedModel model;
};

struct hdmed_compressed {
  hdmed::CompressedDictionary cd;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
hdmed_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return HDMED_OK;
  } catch (const hdmed::InvalidArgument& e) {
    g_last_error = e.what();
    return HDMED_ERR_ARGUMENT;
  } catch (const hdmed::FormatError& e) {
    g_last_error = e.what();
    return HDMED_ERR_FORMAT;
  } catch (const hdmed::IoError& e) {
    g_last_error = e.what();
    return HDMED_ERR_IO;
  } catch (const hdmed::NumericalError& e) {
    g_last_error = e.what();
    return HDMED_ERR_NUMERIC;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return HDMED_ERR_NUMERIC;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return HDMED_ERR_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return HDMED_ERR_NUMERIC;
  }
}

hdmed_status fail_argument(const char* msg) {
  g_last_error = msg;
  return HDMED_ERR_ARGUMENT;
}

void require(bool ok, const char* msg) {
  if (!ok) throw hdmed::InvalidArgument(msg);
}

constexpr Index kQueryChunk = 4096;

// Loads the reference for error evaluation: either another match file
// (params aligned by query id) or a dictionary whose row i answers query i.
MatrixXd load_reference(const std::string& path, Index rows_needed) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw hdmed::IoError("cannot open: " + path);
  char head[9] = {0};
  probe.read(head, 8);
  const bool match_file = std::strncmp(head, "query_id", 8) == 0;
  probe.close();

  if (match_file) {
    const auto ref = hdmed::read_matches_csv(path);
    if (ref.empty()) throw hdmed::FormatError("match file: no rows: " + path);
    const Index l = ref.front().params.size();
    MatrixXd out = MatrixXd::Constant(rows_needed, l,
                                      std::numeric_limits<double>::quiet_NaN());
    for (const auto& m : ref) {
      if (m.query >= 0 && m.query < rows_needed) {
        out.row(m.query) = m.params.transpose();
      }
    }
    for (Index i = 0; l > 0 && i < rows_needed; ++i) {
      if (std::isnan(out(i, 0))) {
        throw hdmed::InvalidArgument("mae: reference match file misses query " +
                                     std::to_string(i));
      }
    }
    return out;
  }

  const auto store = hdmed::DictionaryStore::open(path);
  if (static_cast<std::uint64_t>(rows_needed) > store.rows()) {
    throw hdmed::InvalidArgument("mae: reference dictionary is shorter than the queries");
  }
  MatrixXd signals, params;
  store.read_rows(0, rows_needed, &signals, &params);
  return params;
}

// Streams query rows through a matcher in bounded chunks, then writes one
// match file. Match results arrive per chunk with local query ids.
template <typename MatchFn>
void run_match(const hdmed::DictionaryStore& queries, Index param_dim,
               const char* out_csv, hdmed_match_stats* stats, MatchFn&& matcher) {
  hdmed::MatchStats agg;
  std::vector<hdmed::MatchResult> all;
  all.reserve(static_cast<std::size_t>(queries.rows()));
  MatrixXd block;
  const std::uint64_t n = queries.rows();
  for (std::uint64_t pos = 0; pos < n;) {
    const Index count = static_cast<Index>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(kQueryChunk), n - pos));
    queries.read_rows(pos, count, &block, nullptr);
    auto part = matcher(block, &agg);
    for (auto& r : part) {
      r.query += static_cast<Index>(pos);
      all.push_back(std::move(r));
    }
    pos += static_cast<std::uint64_t>(count);
  }
  if (out_csv != nullptr) {
    hdmed::write_matches_csv(out_csv, all, param_dim);
  }
  if (stats != nullptr) {
    stats->multiply_adds = agg.multiply_adds;
    stats->fallbacks = agg.fallbacks;
  }
}

}  // namespace

extern "C" {

const char* hdmed_version(void) { return "1.0.0"; }

const char* hdmed_status_name(hdmed_status s) {
  switch (s) {
    case HDMED_OK:
      return "ok";
    case HDMED_ERR_ARGUMENT:
      return "argument";
    case HDMED_ERR_IO:
      return "io";
    case HDMED_ERR_FORMAT:
      return "format";
    case HDMED_ERR_NUMERIC:
      return "numeric";
  }
  return "unknown";
}

const char* hdmed_last_error(void) { return g_last_error.c_str(); }

hdmed_status hdmed_probe_file(const char* path, hdmed_file_kind* kind) {
  if (path == nullptr || kind == nullptr) return fail_argument("probe: null argument");
  return guarded([&] {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw hdmed::IoError(std::string("cannot open: ") + path);
    char head[9] = {0};
    in.read(head, 8);
    const auto got = in.gcount();
    *kind = HDMED_FILE_UNKNOWN;
    if (got >= 4) {
      if (std::strncmp(head, "HDMD", 4) == 0) {
        *kind = HDMED_FILE_DICT;
        return;
      }
      if (std::strncmp(head, "HDMM", 4) == 0) {
        *kind = HDMED_FILE_MODEL;
        return;
      }
      if (std::strncmp(head, "HDMC", 4) == 0) {
        *kind = HDMED_FILE_COMPRESSED;
        return;
      }
    }
    if ((got >= 3 && std::strncmp(head, "y_0", 3) == 0) ||
        (got >= 8 && std::strncmp(head, "query_id", 8) == 0)) {
      *kind = HDMED_FILE_CSV;
    }
  });
}

/* ------------------------------------------------------------------ */

hdmed_status hdmed_generate_dictionary(const hdmed_synth_spec* spec, const char* path) {
  if (spec == nullptr || path == nullptr) return fail_argument("generate: null argument");
  return guarded([&] {
    require(spec->param_count == 0 || spec->params != nullptr,
            "generate: null parameter ranges");
    hdmed::SyntheticSpec s;
    s.signal_dim = spec->signal_dim;
    s.params.reserve(spec->param_count);
    for (uint32_t j = 0; j < spec->param_count; ++j) {
      const auto& r = spec->params[j];
      require(r.count >= 1 && r.count <= 0xffffffffull, "generate: bad grid count");
      s.params.push_back({r.lo, r.hi, static_cast<std::uint32_t>(r.count)});
    }
    s.noise_sd = spec->noise_sd;
    s.seed = spec->seed;
    s.dtype = spec->use_f64 ? hdmed::ScalarType::F64 : hdmed::ScalarType::F32;
    hdmed::generate_synthetic(s, path);
  });
}

hdmed_status hdmed_import_csv(const char* csv_path, const char* out_path, int use_f64) {
  if (csv_path == nullptr || out_path == nullptr) return fail_argument("import: null path");
  return guarded([&] {
    hdmed::import_csv(csv_path, out_path,
                      use_f64 ? hdmed::ScalarType::F64 : hdmed::ScalarType::F32);
  });
}

hdmed_status hdmed_dict_open(const char* path, hdmed_dict** out) {
  if (path == nullptr || out == nullptr) return fail_argument("dict: null argument");
  *out = nullptr;
  return guarded([&] { *out = new hdmed_dict{hdmed::DictionaryStore::open(path)}; });
}

void hdmed_dict_close(hdmed_dict* d) { delete d; }

hdmed_status hdmed_dict_info_get(const hdmed_dict* d, hdmed_dict_info* out) {
  if (d == nullptr || out == nullptr) return fail_argument("dict info: null argument");
  out->rows = d->store.rows();
  out->signal_dim = static_cast<uint32_t>(d->store.signal_dim());
  out->param_dim = static_cast<uint32_t>(d->store.param_dim());
  out->is_f64 = d->store.header().dtype == hdmed::ScalarType::F64 ? 1 : 0;
  g_last_error.clear();
  return HDMED_OK;
}

hdmed_status hdmed_dict_read(const hdmed_dict* d, uint64_t first, uint64_t count,
                             double* signals, double* params) {
  if (d == nullptr || signals == nullptr) return fail_argument("dict read: null argument");
  return guarded([&] {
    require(count <= static_cast<uint64_t>(std::numeric_limits<Index>::max()),
            "dict read: count too large");
    MatrixXd sig, par;
    d->store.read_rows(first, static_cast<Index>(count), &sig,
                       params != nullptr ? &par : nullptr);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<RowMajor>(signals, sig.rows(), sig.cols()) = sig;
    if (params != nullptr) {
      Eigen::Map<RowMajor>(params, par.rows(), par.cols()) = par;
    }
  });
}

/* ------------------------------------------------------------------ */

void hdmed_fit_options_init(hdmed_fit_options* opt) {
  if (opt == nullptr) return;
  const hdmed::FitConfig def;
  opt->components = 1;
  opt->heavy_tailed = 0;
  opt->batch_size = static_cast<uint32_t>(def.batch_size);
  opt->passes = static_cast<uint32_t>(def.passes);
  opt->kappa = def.schedule.kappa;
  opt->offset = static_cast<uint32_t>(def.schedule.offset);
  opt->seed = 0;
  opt->init_rows = static_cast<uint32_t>(def.init_rows);
  opt->init_iterations = static_cast<uint32_t>(def.init_iterations);
  opt->max_rank = 0;
  opt->kneedle_sensitivity = def.kneedle_sensitivity;
  opt->nu_init = def.nu_init;
  opt->recover_on_collapse = def.recover_on_collapse ? 1 : 0;
  opt->threads = 0;
  opt->heldout_fraction = def.heldout_fraction;
  opt->heldout_cap = static_cast<uint32_t>(def.heldout_cap);
  opt->report_every = static_cast<uint32_t>(def.report_every);
}

hdmed_status hdmed_fit(const hdmed_dict* d, const hdmed_fit_options* opt,
                       const char* report_csv_path, hdmed_fit_summary* summary,
                       hdmed_model** out) {
  if (d == nullptr || opt == nullptr || out == nullptr) {
    return fail_argument("fit: null argument");
  }
  *out = nullptr;
  return guarded([&] {
    hdmed::FitConfig cfg;
    cfg.components = static_cast<Index>(opt->components);
    cfg.family = opt->heavy_tailed ? hdmed::MixingKind::GammaMix : hdmed::MixingKind::Gaussian;
    cfg.batch_size = static_cast<Index>(opt->batch_size);
    cfg.passes = static_cast<int>(opt->passes);
    cfg.schedule.kappa = opt->kappa;
    cfg.schedule.offset = static_cast<int>(opt->offset);
    cfg.seed = opt->seed;
    cfg.init_rows = static_cast<Index>(opt->init_rows);
    cfg.init_iterations = static_cast<int>(opt->init_iterations);
    cfg.max_rank = static_cast<Index>(opt->max_rank);
    cfg.kneedle_sensitivity = opt->kneedle_sensitivity;
    cfg.nu_init = opt->nu_init;
    cfg.recover_on_collapse = opt->recover_on_collapse != 0;
    cfg.threads = opt->threads;
    cfg.heldout_fraction = opt->heldout_fraction;
    cfg.heldout_cap = static_cast<Index>(opt->heldout_cap);
    cfg.report_every = static_cast<int>(opt->report_every);

    hdmed::FitResult result = hdmed::fit_online(d->store, cfg);
    if (report_csv_path != nullptr) {
      std::ofstream rep(report_csv_path, std::ios::trunc);
      if (!rep) throw hdmed::IoError(std::string("cannot open for writing: ") + report_csv_path);
      rep << result.report.to_csv();
      if (!rep) throw hdmed::IoError(std::string("write failed: ") + report_csv_path);
    }
    if (summary != nullptr) {
      summary->heldout_rows = result.report.heldout_rows;
      summary->trained_rows = result.report.trained_rows;
      summary->floor_events = result.report.floor_events;
      summary->shrink_events = result.report.shrink_events;
      summary->collapse_recoveries = result.report.collapse_recoveries;
      summary->final_heldout_loglik = result.report.rows.empty()
                                          ? std::numeric_limits<double>::quiet_NaN()
                                          : result.report.rows.back().heldout_loglik;
    }
    *out = new hdmed_model{std::move(result.model)};
  });
}

/* ------------------------------------------------------------------ */

hdmed_status hdmed_model_load(const char* path, hdmed_model** out) {
  if (path == nullptr || out == nullptr) return fail_argument("model: null argument");
  *out = nullptr;
  return guarded([&] { *out = new hdmed_model{hdmed::load_model(path)}; });
}

hdmed_status hdmed_model_save(const hdmed_model* m, const char* path) {
  if (m == nullptr || path == nullptr) return fail_argument("model: null argument");
  return guarded([&] { hdmed::save_model(m->model, path); });
}

void hdmed_model_free(hdmed_model* m) { delete m; }

hdmed_status hdmed_model_info_get(const hdmed_model* m, hdmed_model_info* out) {
  if (m == nullptr || out == nullptr) return fail_argument("model info: null argument");
  return guarded([&] {
    out->components = static_cast<uint32_t>(m->model.size());
    out->signal_dim = static_cast<uint32_t>(m->model.dim());
    out->heavy_tailed = m->model.family() == hdmed::MixingKind::GammaMix ? 1 : 0;
    out->free_parameters = hdmed::free_parameter_count(m->model);
  });
}

hdmed_status hdmed_model_component(const hdmed_model* m, uint32_t k,
                                   hdmed_component_info* out) {
  if (m == nullptr || out == nullptr) return fail_argument("model component: null argument");
  return guarded([&] {
    require(k < static_cast<uint32_t>(m->model.size()), "model component: index out of range");
    const auto& c = m->model.components[k];
    out->weight = m->model.weights[static_cast<Index>(k)];
    out->rank = static_cast<uint32_t>(c.rank());
    out->b = c.b;
    out->nu = c.mixing.is_gamma() ? c.mixing.nu() : 0.0;
  });
}

hdmed_status hdmed_log_likelihood(const hdmed_model* m, const hdmed_dict* d, int threads,
                                  double* out) {
  if (m == nullptr || d == nullptr || out == nullptr) {
    return fail_argument("log likelihood: null argument");
  }
  return guarded([&] { *out = hdmed::log_likelihood(m->model, d->store, threads); });
}

hdmed_status hdmed_bic(const hdmed_model* m, const hdmed_dict* d, int threads, double* out) {
  if (m == nullptr || d == nullptr || out == nullptr) {
    return fail_argument("bic: null argument");
  }
  return guarded([&] { *out = hdmed::bic(m->model, d->store, threads); });
}

hdmed_status hdmed_reconstruction_error(const hdmed_model* m, const hdmed_dict* d,
                                        int threads, double* rmse,
                                        double* mean_signal_norm) {
  if (m == nullptr || d == nullptr) {
    return fail_argument("reconstruction: null argument");
  }
  return guarded([&] {
    const auto err = hdmed::reconstruction_rmse(m->model, d->store, threads);
    if (rmse != nullptr) *rmse = err.rmse;
    if (mean_signal_norm != nullptr) *mean_signal_norm = err.mean_signal_norm;
  });
}

hdmed_status hdmed_kneedle(const double* values, size_t count, double sensitivity,
                           int64_t* knee) {
  if (values == nullptr || knee == nullptr) return fail_argument("kneedle: null argument");
  return guarded([&] {
    const std::vector<double> curve(values, values + count);
    const auto found = hdmed::kneedle(curve, sensitivity);
    *knee = found ? static_cast<int64_t>(*found) : -1;
  });
}

/* ------------------------------------------------------------------ */

hdmed_status hdmed_compress(const hdmed_dict* d, const hdmed_model* m, int normalize,
                            int use_f64, int threads, const char* out_path) {
  if (d == nullptr || m == nullptr || out_path == nullptr) {
    return fail_argument("compress: null argument");
  }
  return guarded([&] {
    const auto cd = hdmed::compress(
        d->store, m->model, normalize != 0,
        use_f64 ? hdmed::ScalarType::F64 : hdmed::ScalarType::F32, threads);
    hdmed::save_compressed(cd, out_path);
  });
}

hdmed_status hdmed_compressed_open(const char* path, hdmed_compressed** out) {
  if (path == nullptr || out == nullptr) return fail_argument("archive: null argument");
  *out = nullptr;
  return guarded([&] { *out = new hdmed_compressed{hdmed::load_compressed(path)}; });
}

void hdmed_compressed_close(hdmed_compressed* c) { delete c; }

hdmed_status hdmed_compressed_info_get(const hdmed_compressed* c,
                                       hdmed_compressed_info* out) {
  if (c == nullptr || out == nullptr) return fail_argument("archive info: null argument");
  return guarded([&] {
    out->rows = c->cd.total_rows;
    out->signal_dim = static_cast<uint32_t>(c->cd.model.dim());
    out->param_dim = static_cast<uint32_t>(c->cd.param_dim);
    out->components = static_cast<uint32_t>(c->cd.model.size());
    out->stored_values = c->cd.stored_values();
    out->compression_ratio = c->cd.compression_ratio();
    out->normalized = c->cd.normalized ? 1 : 0;
    out->is_f64 = c->cd.dtype == hdmed::ScalarType::F64 ? 1 : 0;
  });
}

hdmed_status hdmed_compressed_cluster(const hdmed_compressed* c, uint32_t k,
                                      uint64_t* rows, uint32_t* rank) {
  if (c == nullptr || rows == nullptr || rank == nullptr) {
    return fail_argument("archive cluster: null argument");
  }
  return guarded([&] {
    require(k < c->cd.clusters.size(), "archive cluster: index out of range");
    const auto& cl = c->cd.clusters[k];
    *rows = static_cast<uint64_t>(cl.size());
    *rank = static_cast<uint32_t>(cl.reduced.cols());
  });
}

hdmed_status hdmed_compressed_model(const hdmed_compressed* c, hdmed_model** out) {
  if (c == nullptr || out == nullptr) return fail_argument("archive model: null argument");
  *out = nullptr;
  return guarded([&] { *out = new hdmed_model{c->cd.model}; });
}

/* ------------------------------------------------------------------ */

void hdmed_match_options_init(hdmed_match_options* opt) {
  if (opt == nullptr) return;
  opt->top_clusters = 1;
  opt->normalize = 0;
  opt->threads = 0;
}

hdmed_status hdmed_match(const hdmed_compressed* c, const hdmed_dict* queries,
                         const hdmed_match_options* opt, const char* out_csv,
                         hdmed_match_stats* stats) {
  if (c == nullptr || queries == nullptr || opt == nullptr) {
    return fail_argument("match: null argument");
  }
  return guarded([&] {
    hdmed::MatchOptions mo;
    mo.top_clusters = static_cast<Index>(opt->top_clusters);
    mo.normalize = opt->normalize != 0;
    mo.threads = opt->threads;
    run_match(queries->store, c->cd.param_dim, out_csv, stats,
              [&](const MatrixXd& block, hdmed::MatchStats* agg) {
                return hdmed::match_compressed(c->cd, block, mo, agg);
              });
  });
}

hdmed_status hdmed_full_match(const hdmed_dict* d, const hdmed_dict* queries,
                              const hdmed_match_options* opt, const char* out_csv,
                              hdmed_match_stats* stats) {
  if (d == nullptr || queries == nullptr || opt == nullptr) {
    return fail_argument("match: null argument");
  }
  return guarded([&] {
    hdmed::MatchOptions mo;
    mo.top_clusters = static_cast<Index>(opt->top_clusters);
    mo.normalize = opt->normalize != 0;
    mo.threads = opt->threads;
    run_match(queries->store, d->store.param_dim(), out_csv, stats,
              [&](const MatrixXd& block, hdmed::MatchStats* agg) {
                return hdmed::full_match(d->store, block, mo, agg);
              });
  });
}

hdmed_status hdmed_match_mae(const char* matches_csv, const char* reference_path,
                             double* mae, uint32_t* param_count) {
  if (matches_csv == nullptr || reference_path == nullptr || mae == nullptr ||
      param_count == nullptr) {
    return fail_argument("mae: null argument");
  }
  return guarded([&] {
    const auto matches = hdmed::read_matches_csv(matches_csv);
    if (matches.empty()) throw hdmed::FormatError("match file: no rows");
    Index max_query = 0;
    for (const auto& m : matches) max_query = std::max(max_query, m.query);
    const MatrixXd ref = load_reference(reference_path, max_query + 1);
    const VectorXd err = hdmed::match_mae(matches, ref);
    require(*param_count >= static_cast<uint32_t>(err.size()),
            "mae: output buffer too small");
    *param_count = static_cast<uint32_t>(err.size());
    for (Index j = 0; j < err.size(); ++j) mae[j] = err[j];
  });
}

hdmed_status hdmed_match_agreement(const char* matches_csv_a, const char* matches_csv_b,
                                   double* fraction) {
  if (matches_csv_a == nullptr || matches_csv_b == nullptr || fraction == nullptr) {
    return fail_argument("agreement: null argument");
  }
  return guarded([&] {
    const auto a = hdmed::read_matches_csv(matches_csv_a);
    const auto b = hdmed::read_matches_csv(matches_csv_b);
    require(!a.empty() && a.size() == b.size(),
            "agreement: match files differ in length");
    std::vector<std::uint64_t> index_b;
    Index max_query = 0;
    for (const auto& m : b) max_query = std::max(max_query, m.query);
    index_b.assign(static_cast<std::size_t>(max_query) + 1, 0);
    std::vector<char> seen(static_cast<std::size_t>(max_query) + 1, 0);
    for (const auto& m : b) {
      index_b[static_cast<std::size_t>(m.query)] = m.dict_index;
      seen[static_cast<std::size_t>(m.query)] = 1;
    }
    std::uint64_t equal = 0;
    for (const auto& m : a) {
      require(m.query >= 0 && m.query <= max_query && seen[static_cast<std::size_t>(m.query)],
              "agreement: query sets differ");
      if (index_b[static_cast<std::size_t>(m.query)] == m.dict_index) ++equal;
    }
    *fraction = static_cast<double>(equal) / static_cast<double>(a.size());
  });
}

} /* extern "C" */

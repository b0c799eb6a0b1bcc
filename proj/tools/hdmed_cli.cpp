// Command line front end over the hdmed C API.
//
// Exit codes: 0 success, 2 usage, 3 missing or malformed data
// (including dimension mismatches), 4 numerical failure.

#include "hdmed.h"

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

int map_status(hdmed_status s) {
  switch (s) {
    case HDMED_OK:
      return 0;
    case HDMED_ERR_ARGUMENT:
    case HDMED_ERR_IO:
    case HDMED_ERR_FORMAT:
      return 3;
    case HDMED_ERR_NUMERIC:
      return 4;
  }
  return 4;
}

int report_failure(hdmed_status s) {
  std::fprintf(stderr, "error: %s\n", hdmed_last_error());
  return map_status(s);
}

#define CLI_CHECK(call)                                \
  do {                                                 \
    const hdmed_status st_ = (call);                   \
    if (st_ != HDMED_OK) return report_failure(st_);   \
  } while (0)

struct DictCloser {
  void operator()(hdmed_dict* d) const { hdmed_dict_close(d); }
};
struct ModelCloser {
  void operator()(hdmed_model* m) const { hdmed_model_free(m); }
};
struct ArchiveCloser {
  void operator()(hdmed_compressed* c) const { hdmed_compressed_close(c); }
};
using DictPtr = std::unique_ptr<hdmed_dict, DictCloser>;
using ModelPtr = std::unique_ptr<hdmed_model, ModelCloser>;
using ArchivePtr = std::unique_ptr<hdmed_compressed, ArchiveCloser>;

/* ------------------------------------------------------------------ */
/* Generation spec files: a flat key = value subset of TOML.           */
/* ------------------------------------------------------------------ */

struct GenSpecFile {
  uint32_t signal_dim = 0;
  std::vector<double> param_lo;
  std::vector<double> param_hi;
  std::vector<uint64_t> param_count;
  double noise_sd = 0.0;
  uint64_t seed = 0;
  bool f64 = false;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& tok, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("bad number '" + tok + "' on line " + std::to_string(line_no));
  }
}

uint64_t parse_unsigned(const std::string& tok, int line_no) {
  try {
    std::size_t used = 0;
    if (!tok.empty() && tok[0] == '-') throw std::invalid_argument(tok);
    const unsigned long long v = std::stoull(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("bad count '" + tok + "' on line " + std::to_string(line_no));
  }
}

std::vector<std::string> parse_array(const std::string& value, int line_no) {
  if (value.size() < 2 || value.front() != '[' || value.back() != ']') {
    throw std::runtime_error("expected an array on line " + std::to_string(line_no));
  }
  std::vector<std::string> out;
  std::string inner = value.substr(1, value.size() - 2);
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      throw std::runtime_error("empty array element on line " + std::to_string(line_no));
    }
    out.push_back(item);
  }
  return out;
}

GenSpecFile parse_gen_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  GenSpecFile spec;
  std::string line;
  int line_no = 0;
  bool saw_dim = false;
  while (std::getline(in, line)) {
    ++line_no;
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("expected key = value on line " + std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) {
      throw std::runtime_error("missing value on line " + std::to_string(line_no));
    }
    if (key == "signal_dim") {
      spec.signal_dim = static_cast<uint32_t>(parse_unsigned(value, line_no));
      saw_dim = true;
    } else if (key == "param_lo" || key == "param_hi") {
      auto& dst = key == "param_lo" ? spec.param_lo : spec.param_hi;
      dst.clear();
      for (const auto& tok : parse_array(value, line_no)) {
        dst.push_back(parse_number(tok, line_no));
      }
    } else if (key == "param_count") {
      spec.param_count.clear();
      for (const auto& tok : parse_array(value, line_no)) {
        spec.param_count.push_back(parse_unsigned(tok, line_no));
      }
    } else if (key == "noise_sd") {
      spec.noise_sd = parse_number(value, line_no);
    } else if (key == "seed") {
      spec.seed = parse_unsigned(value, line_no);
    } else if (key == "dtype") {
      if (value == "\"f32\"" || value == "f32") {
        spec.f64 = false;
      } else if (value == "\"f64\"" || value == "f64") {
        spec.f64 = true;
      } else {
        throw std::runtime_error("dtype must be \"f32\" or \"f64\" on line " +
                                 std::to_string(line_no));
      }
    } else {
      throw std::runtime_error("unknown key '" + key + "' on line " + std::to_string(line_no));
    }
  }
  if (!saw_dim) throw std::runtime_error("spec is missing signal_dim");
  if (spec.param_lo.size() != spec.param_hi.size() ||
      spec.param_lo.size() != spec.param_count.size() || spec.param_lo.empty()) {
    throw std::runtime_error("param_lo, param_hi and param_count must share one length");
  }
  return spec;
}

/* ------------------------------------------------------------------ */
/* Shared fit options                                                  */
/* ------------------------------------------------------------------ */

struct FitFlags {
  hdmed_fit_options opt{};
  std::string report_path;

  void attach(CLI::App* cmd, bool with_components) {
    hdmed_fit_options_init(&opt);
    if (with_components) {
      cmd->add_option("--components", opt.components, "mixture size")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
    }
    cmd->add_flag("--heavy-tails", opt.heavy_tailed,
                  "model heavy tails with learned degrees of freedom");
    cmd->add_option("--batch-size", opt.batch_size, "rows per update")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--passes", opt.passes, "sweeps over the dictionary")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--kappa", opt.kappa, "step size decay exponent")
        ->capture_default_str();
    cmd->add_option("--offset", opt.offset, "step size shift")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--seed", opt.seed, "random seed")->capture_default_str();
    cmd->add_option("--init-rows", opt.init_rows, "subsample for the spectral start")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--init-iters", opt.init_iterations, "dense sweeps on the subsample")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--max-rank", opt.max_rank, "cap on component rank (0: dim - 1)")
        ->capture_default_str();
    cmd->add_option("--sensitivity", opt.kneedle_sensitivity, "elbow sensitivity")
        ->capture_default_str();
    cmd->add_option("--nu-init", opt.nu_init, "initial degrees of freedom")
        ->capture_default_str();
    cmd->add_flag("--recover", opt.recover_on_collapse,
                  "re-seed collapsed components instead of failing");
    cmd->add_option("--threads", opt.threads, "worker threads (0: all)")
        ->capture_default_str();
    cmd->add_option("--heldout-fraction", opt.heldout_fraction,
                    "leading fraction reserved for monitoring")
        ->capture_default_str();
    cmd->add_option("--heldout-cap", opt.heldout_cap, "held-out row cap")
        ->capture_default_str();
    cmd->add_option("--report-every", opt.report_every, "steps between report rows")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--report", report_path, "write the step report CSV here");
  }
};

void print_fit_summary(const hdmed_fit_summary& s) {
  std::fprintf(stderr,
               "fit: trained_rows=%" PRIu64 " heldout_rows=%" PRIu64
               " floors=%d shrinks=%d recoveries=%d heldout_loglik=%.17g\n",
               s.trained_rows, s.heldout_rows, s.floor_events, s.shrink_events,
               s.collapse_recoveries, s.final_heldout_loglik);
}

/* ------------------------------------------------------------------ */
/* Subcommand bodies                                                   */
/* ------------------------------------------------------------------ */

int run_gen(const std::string& spec_path, const std::string& out_path) {
  GenSpecFile spec;
  try {
    spec = parse_gen_spec(spec_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: generation spec: %s\n", e.what());
    return 3;
  }
  std::vector<hdmed_param_range> ranges(spec.param_lo.size());
  for (std::size_t j = 0; j < ranges.size(); ++j) {
    ranges[j] = {spec.param_lo[j], spec.param_hi[j], spec.param_count[j]};
  }
  hdmed_synth_spec s{};
  s.signal_dim = spec.signal_dim;
  s.param_count = static_cast<uint32_t>(ranges.size());
  s.params = ranges.data();
  s.noise_sd = spec.noise_sd;
  s.seed = spec.seed;
  s.use_f64 = spec.f64 ? 1 : 0;
  CLI_CHECK(hdmed_generate_dictionary(&s, out_path.c_str()));

  DictPtr dict;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(out_path.c_str(), &raw));
    dict.reset(raw);
  }
  hdmed_dict_info info{};
  CLI_CHECK(hdmed_dict_info_get(dict.get(), &info));
  std::printf("rows=%" PRIu64 " signal_dim=%u param_dim=%u dtype=%s\n", info.rows,
              info.signal_dim, info.param_dim, info.is_f64 ? "f64" : "f32");
  return 0;
}

int run_fit(const std::string& dict_path, const std::string& out_path, FitFlags& flags) {
  DictPtr dict;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(dict_path.c_str(), &raw));
    dict.reset(raw);
  }
  hdmed_fit_summary summary{};
  hdmed_model* raw_model = nullptr;
  CLI_CHECK(hdmed_fit(dict.get(), &flags.opt,
                      flags.report_path.empty() ? nullptr : flags.report_path.c_str(),
                      &summary, &raw_model));
  ModelPtr model(raw_model);
  print_fit_summary(summary);
  CLI_CHECK(hdmed_model_save(model.get(), out_path.c_str()));

  hdmed_model_info info{};
  CLI_CHECK(hdmed_model_info_get(model.get(), &info));
  std::printf("components=%u signal_dim=%u heavy_tailed=%d free_parameters=%" PRId64 "\n",
              info.components, info.signal_dim, info.heavy_tailed, info.free_parameters);
  return 0;
}

int run_select(const std::string& dict_path, uint32_t kmin, uint32_t kmax,
               const std::string& out_path, FitFlags& flags) {
  if (kmin < 1 || kmax < kmin) {
    std::fprintf(stderr, "error: need 1 <= kmin <= kmax\n");
    return 2;
  }
  DictPtr dict;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(dict_path.c_str(), &raw));
    dict.reset(raw);
  }
  std::printf("components,free_parameters,log_likelihood,bic\n");
  std::vector<double> bics;
  ModelPtr best;
  double best_bic = 0.0;
  uint32_t best_k = 0;
  for (uint32_t k = kmin; k <= kmax; ++k) {
    flags.opt.components = k;
    hdmed_model* raw_model = nullptr;
    CLI_CHECK(hdmed_fit(dict.get(), &flags.opt, nullptr, nullptr, &raw_model));
    ModelPtr model(raw_model);
    double loglik = 0.0;
    double bic_value = 0.0;
    CLI_CHECK(hdmed_log_likelihood(model.get(), dict.get(), flags.opt.threads, &loglik));
    CLI_CHECK(hdmed_bic(model.get(), dict.get(), flags.opt.threads, &bic_value));
    hdmed_model_info info{};
    CLI_CHECK(hdmed_model_info_get(model.get(), &info));
    std::printf("%u,%" PRId64 ",%.17g,%.17g\n", k, info.free_parameters, loglik, bic_value);
    bics.push_back(bic_value);
    if (best == nullptr || bic_value < best_bic) {
      best_bic = bic_value;
      best_k = k;
      best = std::move(model);
    }
  }
  std::printf("selected_components=%u\n", best_k);

  if (bics.size() >= 3) {
    // the elbow finder wants a non-increasing curve; feed the running minimum
    std::vector<double> envelope(bics.size());
    double running = bics[0];
    for (std::size_t i = 0; i < bics.size(); ++i) {
      running = std::min(running, bics[i]);
      envelope[i] = running;
    }
    int64_t knee = -1;
    if (hdmed_kneedle(envelope.data(), envelope.size(), 1.0, &knee) == HDMED_OK &&
        knee >= 0) {
      std::printf("elbow_components=%" PRId64 "\n",
                  static_cast<int64_t>(kmin) + knee);
    }
  }
  if (!out_path.empty()) {
    CLI_CHECK(hdmed_model_save(best.get(), out_path.c_str()));
  }
  return 0;
}

int run_compress(const std::string& dict_path, const std::string& model_path,
                 const std::string& out_path, bool normalize, bool f64, int threads) {
  DictPtr dict;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(dict_path.c_str(), &raw));
    dict.reset(raw);
  }
  ModelPtr model;
  {
    hdmed_model* raw = nullptr;
    CLI_CHECK(hdmed_model_load(model_path.c_str(), &raw));
    model.reset(raw);
  }
  CLI_CHECK(hdmed_compress(dict.get(), model.get(), normalize ? 1 : 0, f64 ? 1 : 0,
                           threads, out_path.c_str()));
  ArchivePtr arc;
  {
    hdmed_compressed* raw = nullptr;
    CLI_CHECK(hdmed_compressed_open(out_path.c_str(), &raw));
    arc.reset(raw);
  }
  hdmed_compressed_info info{};
  CLI_CHECK(hdmed_compressed_info_get(arc.get(), &info));
  std::printf("rows=%" PRIu64 " stored_values=%" PRIu64 " compression_ratio=%.17g\n",
              info.rows, info.stored_values, info.compression_ratio);
  return 0;
}

int run_match(const std::string& archive_path, const std::string& queries_path,
              const std::string& out_csv, uint32_t top_clusters, int threads) {
  ArchivePtr arc;
  {
    hdmed_compressed* raw = nullptr;
    CLI_CHECK(hdmed_compressed_open(archive_path.c_str(), &raw));
    arc.reset(raw);
  }
  DictPtr queries;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(queries_path.c_str(), &raw));
    queries.reset(raw);
  }
  hdmed_match_options opt{};
  hdmed_match_options_init(&opt);
  opt.top_clusters = top_clusters;
  opt.threads = threads;
  hdmed_match_stats stats{};
  CLI_CHECK(hdmed_match(arc.get(), queries.get(), &opt, out_csv.c_str(), &stats));
  std::printf("multiply_adds=%" PRIu64 " fallbacks=%" PRIu64 "\n", stats.multiply_adds,
              stats.fallbacks);
  return 0;
}

int run_full_match(const std::string& dict_path, const std::string& queries_path,
                   const std::string& out_csv, bool normalize, int threads) {
  DictPtr dict;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(dict_path.c_str(), &raw));
    dict.reset(raw);
  }
  DictPtr queries;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(queries_path.c_str(), &raw));
    queries.reset(raw);
  }
  hdmed_match_options opt{};
  hdmed_match_options_init(&opt);
  opt.normalize = normalize ? 1 : 0;
  opt.threads = threads;
  hdmed_match_stats stats{};
  CLI_CHECK(hdmed_full_match(dict.get(), queries.get(), &opt, out_csv.c_str(), &stats));
  std::printf("multiply_adds=%" PRIu64 " fallbacks=%" PRIu64 "\n", stats.multiply_adds,
              stats.fallbacks);
  return 0;
}

int run_eval(const std::string& matches, const std::string& ref, const std::string& against,
             const std::string& dict_path, const std::string& model_path, int threads) {
  const bool mae_mode = !matches.empty() && !ref.empty();
  const bool agreement_mode = !matches.empty() && !against.empty();
  const bool recon_mode = !dict_path.empty() && !model_path.empty();
  if (static_cast<int>(mae_mode) + static_cast<int>(agreement_mode) +
          static_cast<int>(recon_mode) !=
      1) {
    std::fprintf(stderr,
                 "error: pick one of --matches with --ref, --matches with --against, "
                 "or --dict with --model\n");
    return 2;
  }
  if (mae_mode) {
    std::vector<double> mae(256);
    uint32_t count = static_cast<uint32_t>(mae.size());
    CLI_CHECK(hdmed_match_mae(matches.c_str(), ref.c_str(), mae.data(), &count));
    double total = 0.0;
    for (uint32_t j = 0; j < count; ++j) {
      std::printf("mae_t_%u=%.17g\n", j, mae[j]);
      total += mae[j];
    }
    std::printf("mae_mean=%.17g\n", count > 0 ? total / count : 0.0);
    return 0;
  }
  if (agreement_mode) {
    double fraction = 0.0;
    CLI_CHECK(hdmed_match_agreement(matches.c_str(), against.c_str(), &fraction));
    std::printf("index_agreement=%.17g\n", fraction);
    return 0;
  }
  DictPtr dict;
  {
    hdmed_dict* raw = nullptr;
    CLI_CHECK(hdmed_dict_open(dict_path.c_str(), &raw));
    dict.reset(raw);
  }
  ModelPtr model;
  {
    hdmed_model* raw = nullptr;
    CLI_CHECK(hdmed_model_load(model_path.c_str(), &raw));
    model.reset(raw);
  }
  double rmse = 0.0;
  double mean_norm = 0.0;
  CLI_CHECK(hdmed_reconstruction_error(model.get(), dict.get(), threads, &rmse, &mean_norm));
  std::printf("reconstruction_rmse=%.17g\nmean_signal_norm=%.17g\nrelative_rmse=%.17g\n",
              rmse, mean_norm, mean_norm > 0.0 ? rmse / mean_norm : 0.0);
  return 0;
}

int run_info(const std::string& path) {
  hdmed_file_kind kind = HDMED_FILE_UNKNOWN;
  CLI_CHECK(hdmed_probe_file(path.c_str(), &kind));
  switch (kind) {
    case HDMED_FILE_DICT:
    case HDMED_FILE_CSV: {
      DictPtr dict;
      hdmed_dict* raw = nullptr;
      CLI_CHECK(hdmed_dict_open(path.c_str(), &raw));
      dict.reset(raw);
      hdmed_dict_info info{};
      CLI_CHECK(hdmed_dict_info_get(dict.get(), &info));
      std::printf("kind=dictionary rows=%" PRIu64 " signal_dim=%u param_dim=%u dtype=%s\n",
                  info.rows, info.signal_dim, info.param_dim, info.is_f64 ? "f64" : "f32");
      return 0;
    }
    case HDMED_FILE_MODEL: {
      ModelPtr model;
      hdmed_model* raw = nullptr;
      CLI_CHECK(hdmed_model_load(path.c_str(), &raw));
      model.reset(raw);
      hdmed_model_info info{};
      CLI_CHECK(hdmed_model_info_get(model.get(), &info));
      std::printf("kind=model components=%u signal_dim=%u heavy_tailed=%d "
                  "free_parameters=%" PRId64 "\n",
                  info.components, info.signal_dim, info.heavy_tailed,
                  info.free_parameters);
      std::printf("component,weight,rank,trailing_scale,dof\n");
      for (uint32_t k = 0; k < info.components; ++k) {
        hdmed_component_info c{};
        CLI_CHECK(hdmed_model_component(model.get(), k, &c));
        std::printf("%u,%.17g,%u,%.17g,%.17g\n", k, c.weight, c.rank, c.b, c.nu);
      }
      return 0;
    }
    case HDMED_FILE_COMPRESSED: {
      ArchivePtr arc;
      hdmed_compressed* raw = nullptr;
      CLI_CHECK(hdmed_compressed_open(path.c_str(), &raw));
      arc.reset(raw);
      hdmed_compressed_info info{};
      CLI_CHECK(hdmed_compressed_info_get(arc.get(), &info));
      std::printf("kind=archive rows=%" PRIu64 " signal_dim=%u param_dim=%u components=%u "
                  "stored_values=%" PRIu64 " compression_ratio=%.17g normalized=%d "
                  "dtype=%s\n",
                  info.rows, info.signal_dim, info.param_dim, info.components,
                  info.stored_values, info.compression_ratio, info.normalized,
                  info.is_f64 ? "f64" : "f32");
      std::printf("cluster,rows,rank\n");
      for (uint32_t k = 0; k < info.components; ++k) {
        uint64_t rows = 0;
        uint32_t rank = 0;
        CLI_CHECK(hdmed_compressed_cluster(arc.get(), k, &rows, &rank));
        std::printf("%u,%" PRIu64 ",%u\n", k, rows, rank);
      }
      return 0;
    }
    case HDMED_FILE_UNKNOWN:
      break;
  }
  std::fprintf(stderr, "error: unrecognized file: %s\n", path.c_str());
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixture learning, compression and matching for signal dictionaries"};
  app.require_subcommand(1);

  std::string gen_spec, gen_out;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dictionary");
  gen->add_option("--spec", gen_spec, "generation spec (key = value)")->required();
  gen->add_option("--out", gen_out, "output dictionary path")->required();

  std::string fit_dict, fit_out;
  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "fit a mixture to a dictionary");
  fit->add_option("--dict", fit_dict, "dictionary path")->required();
  fit->add_option("--out", fit_out, "output model path")->required();
  fit_flags.attach(fit, true);

  std::string sel_dict, sel_out;
  uint32_t sel_kmin = 1;
  uint32_t sel_kmax = 6;
  FitFlags sel_flags;
  auto* sel = app.add_subcommand("select", "fit a range of sizes and compare by BIC");
  sel->add_option("--dict", sel_dict, "dictionary path")->required();
  sel->add_option("--kmin", sel_kmin, "smallest mixture size")->capture_default_str();
  sel->add_option("--kmax", sel_kmax, "largest mixture size")->capture_default_str();
  sel->add_option("--out", sel_out, "save the lowest-BIC model here");
  sel_flags.attach(sel, false);

  std::string cmp_dict, cmp_model, cmp_out;
  bool cmp_normalize = false;
  bool cmp_f64 = false;
  int cmp_threads = 0;
  auto* cmp = app.add_subcommand("compress", "build the clustered latent archive");
  cmp->add_option("--dict", cmp_dict, "dictionary path")->required();
  cmp->add_option("--model", cmp_model, "model path")->required();
  cmp->add_option("--out", cmp_out, "output archive path")->required();
  cmp->add_flag("--normalize", cmp_normalize, "scale signals to unit norm first");
  cmp->add_flag("--f64", cmp_f64, "store latent values in 64 bits");
  cmp->add_option("--threads", cmp_threads, "worker threads (0: all)");

  std::string m_archive, m_queries, m_out;
  uint32_t m_top = 1;
  int m_threads = 0;
  auto* mat = app.add_subcommand("match", "match queries against an archive");
  mat->add_option("--archive", m_archive, "archive path")->required();
  mat->add_option("--queries", m_queries, "query dictionary path")->required();
  mat->add_option("--out", m_out, "output match CSV")->required();
  mat->add_option("--top-clusters", m_top, "clusters compared per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  mat->add_option("--threads", m_threads, "worker threads (0: all)");

  std::string fm_dict, fm_queries, fm_out;
  bool fm_normalize = false;
  int fm_threads = 0;
  auto* fmat = app.add_subcommand("full-match", "exhaustive reference matching");
  fmat->add_option("--dict", fm_dict, "dictionary path")->required();
  fmat->add_option("--queries", fm_queries, "query dictionary path")->required();
  fmat->add_option("--out", fm_out, "output match CSV")->required();
  fmat->add_flag("--normalize", fm_normalize, "scale signals to unit norm first");
  fmat->add_option("--threads", fm_threads, "worker threads (0: all)");

  std::string ev_matches, ev_ref, ev_against, ev_dict, ev_model;
  int ev_threads = 0;
  auto* ev = app.add_subcommand("eval", "evaluate matches or reconstruction");
  ev->add_option("--matches", ev_matches, "match CSV to evaluate");
  ev->add_option("--ref", ev_ref, "ground truth (dictionary or match CSV)");
  ev->add_option("--against", ev_against, "second match CSV for index agreement");
  ev->add_option("--dict", ev_dict, "dictionary for reconstruction error");
  ev->add_option("--model", ev_model, "model for reconstruction error");
  ev->add_option("--threads", ev_threads, "worker threads (0: all)");

  std::string info_path;
  auto* inf = app.add_subcommand("info", "describe a data file");
  inf->add_option("file", info_path, "path to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  if (gen->parsed()) return run_gen(gen_spec, gen_out);
  if (fit->parsed()) return run_fit(fit_dict, fit_out, fit_flags);
  if (sel->parsed()) return run_select(sel_dict, sel_kmin, sel_kmax, sel_out, sel_flags);
  if (cmp->parsed()) {
    return run_compress(cmp_dict, cmp_model, cmp_out, cmp_normalize, cmp_f64, cmp_threads);
  }
  if (mat->parsed()) return run_match(m_archive, m_queries, m_out, m_top, m_threads);
  if (fmat->parsed()) {
    return run_full_match(fm_dict, fm_queries, fm_out, fm_normalize, fm_threads);
  }
  if (ev->parsed()) {
    return run_eval(ev_matches, ev_ref, ev_against, ev_dict, ev_model, ev_threads);
  }
  if (inf->parsed()) return run_info(info_path);
  return 2;
}

#pragma once

#include "core/batch_em.hpp"
#include "core/suffstats.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hdmed {

class DictionaryStore;

/// Step sizes gamma_i = (i + offset)^(-kappa) for i = 1, 2, ...
/// kappa in (0.5, 1] and offset >= 1 keep every gamma in (0, 1).
/// A positive fixed_gamma overrides the power law (stationarity probes).
struct LearningRateSchedule {
  double kappa = 0.6;
  int offset = 2;
  double fixed_gamma = 0.0;

  [[nodiscard]] double operator()(std::int64_t i) const;
  void validate() const;
};

struct FitConfig {
  Index components = 1;
  MixingKind family = MixingKind::Gaussian;
  Index batch_size = 2048;
  int passes = 1;
  LearningRateSchedule schedule;
  std::uint64_t seed = 0;

  Index init_rows = 4096;          // subsample size for the spectral start
  int init_iterations = 25;        // dense EM iterations on the subsample
  Index max_rank = 0;              // cap on d, 0 means dim - 1
  double kneedle_sensitivity = 1.0;
  double explained_fallback = 0.95;  // variance share when no knee is found
  double nu_init = 10.0;

  bool recover_on_collapse = false;
  int threads = 0;
  double heldout_fraction = 0.01;  // leading rows reserved for monitoring
  Index heldout_cap = 10000;
  int report_every = 1;

  void validate() const;
};

struct FitReportRow {
  std::int64_t step = 0;
  double gamma = 0.0;
  double heldout_loglik = 0.0;  // per-observation average, NaN without a held-out set
  double min_mass = 0.0;        // smallest component responsibility mass
};

struct FitReport {
  std::vector<FitReportRow> rows;
  std::uint64_t heldout_rows = 0;
  std::uint64_t trained_rows = 0;
  int floor_events = 0;      // trailing scale pushed to its floor
  int shrink_events = 0;     // component rank reduced during repair
  int collapse_recoveries = 0;

  [[nodiscard]] std::string to_csv() const;
};

struct FitResult {
  HdMedModel model;
  FitReport report;
};

struct MStepEvents {
  int floors = 0;
  int shrinks = 0;
};

/// Maximizer of the expected complete-data objective for blended
/// statistics. Component ranks, the family and the dimension carry over
/// from prev; a component whose mass falls under 1e-8 raises
/// NumericalError. Near-degenerate scale spectra are repaired by flooring b
/// and shrinking the rank, reported through events.
[[nodiscard]] HdMedModel m_step(const SuffStats& stats, const HdMedModel& prev,
                                MStepEvents* events = nullptr);

/// Dense EM on a subsample followed by per-component eigendecomposition.
/// Ranks come from the kneedle elbow of each scale spectrum (fallback:
/// smallest rank explaining the configured variance share), capped by
/// max_rank and dim - 1.
[[nodiscard]] HdMedModel spectral_init(const Eigen::Ref<const MatrixXd>& subsample,
                                       const FitConfig& cfg);

/// Streaming fit: reserves the held-out prefix, seeds via spectral_init on
/// a uniformly drawn subsample, then runs stochastic-approximation EM over
/// mini-batches. Deterministic for a fixed config, seed and thread count.
[[nodiscard]] FitResult fit_online(const DictionaryStore& data, const FitConfig& cfg);
[[nodiscard]] FitResult fit_online(const DictionaryStore& data, const FitConfig& cfg,
                                   const HdMedModel& init);

}  // namespace hdmed

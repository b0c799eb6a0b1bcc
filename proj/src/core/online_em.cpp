#include "core/online_em.hpp"

#include "core/dictionary.hpp"
#include "core/kneedle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace hdmed {

double LearningRateSchedule::operator()(std::int64_t i) const {
  if (fixed_gamma > 0.0) return fixed_gamma;
  return std::pow(static_cast<double>(i) + static_cast<double>(offset), -kappa);
}

void LearningRateSchedule::validate() const {
  if (fixed_gamma != 0.0) {
    if (!(fixed_gamma > 0.0) || !(fixed_gamma < 1.0)) {
      throw InvalidArgument("schedule: fixed gamma must lie in (0, 1)");
    }
    return;
  }
  if (!(kappa > 0.5) || !(kappa <= 1.0)) {
    throw InvalidArgument("schedule: kappa must lie in (0.5, 1]");
  }
  if (offset < 1) throw InvalidArgument("schedule: offset must be >= 1");
}

void FitConfig::validate() const {
  if (components < 1) throw InvalidArgument("fit: need at least one component");
  if (batch_size < 1) throw InvalidArgument("fit: batch size must be >= 1");
  if (passes < 1) throw InvalidArgument("fit: need at least one pass");
  if (init_rows < 2 * components) {
    throw InvalidArgument("fit: init subsample must hold at least 2k rows");
  }
  if (init_iterations < 1) throw InvalidArgument("fit: need at least one init iteration");
  if (max_rank < 0) throw InvalidArgument("fit: max rank must be >= 0");
  if (!(kneedle_sensitivity >= 0.0)) throw InvalidArgument("fit: bad kneedle sensitivity");
  if (!(explained_fallback > 0.0) || !(explained_fallback <= 1.0)) {
    throw InvalidArgument("fit: explained variance fallback must lie in (0, 1]");
  }
  if (!(heldout_fraction >= 0.0) || !(heldout_fraction < 0.5)) {
    throw InvalidArgument("fit: held-out fraction must lie in [0, 0.5)");
  }
  if (heldout_cap < 0) throw InvalidArgument("fit: held-out cap must be >= 0");
  if (report_every < 1) throw InvalidArgument("fit: report cadence must be >= 1");
  if (family == MixingKind::GammaMix && !(nu_init > 0.0)) {
    throw InvalidArgument("fit: initial degrees of freedom must be > 0");
  }
  schedule.validate();
}

namespace {

constexpr double kCollapseMass = 1e-8;

/// Collapse carrier so the driver can tell which component to re-seed.
class ComponentCollapse : public NumericalError {
 public:
  ComponentCollapse(Index k, double mass)
      : NumericalError("m_step: component " + std::to_string(k) + " collapsed (mass " +
                       std::to_string(mass) + ")"),
        component(k) {}
  Index component;
};

struct SpikedScale {
  MatrixXd dstar;
  VectorXd a;
  double b = 0.0;
};

// Builds the spiked scale structure from a spectrum sorted descending.
// Floors the trailing scale and walks the rank down while the smallest
// kept eigenvalue fails to clear it.
SpikedScale build_spiked(const VectorXd& evals_desc, const MatrixXd& evecs_desc, Index d,
                         MStepEvents* events) {
  const Index m = evals_desc.size();
  d = std::min(d, m - 1);
  const double trace = std::max(evals_desc.sum(), 0.0);
  const double floor = std::max(1e-10 * trace / static_cast<double>(m), 1e-300);

  auto trailing_mean = [&](Index dd) {
    const double lead = evals_desc.head(dd).sum();
    return (trace - lead) / static_cast<double>(m - dd);
  };

  double b = trailing_mean(d);
  bool floored = false;
  if (b < floor) {
    b = floor;
    floored = true;
  }
  while (d > 1 && evals_desc[d - 1] <= b) {
    --d;
    if (events) events->shrinks += 1;
    b = trailing_mean(d);
    if (b < floor) {
      b = floor;
      floored = true;
    }
  }
  SpikedScale out;
  out.a = evals_desc.head(d);
  if (out.a[d - 1] <= b) {
    // fully isotropic spectrum; keep one barely dominant direction
    out.a[d - 1] = b * (1.0 + 1e-9);
    floored = true;
  }
  if (floored && events) events->floors += 1;
  out.dstar = evecs_desc.leftCols(d);
  out.b = b;
  return out;
}

// Eigendecomposition with eigenvalues sorted descending and clamped at 0.
void eigen_desc(const MatrixXd& sym, VectorXd* evals, MatrixXd* evecs) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("m_step: eigendecomposition failed");
  }
  const Index m = sym.rows();
  evals->resize(m);
  evecs->resize(m, m);
  for (Index i = 0; i < m; ++i) {
    (*evals)[i] = std::max(eig.eigenvalues()[m - 1 - i], 0.0);
    evecs->col(i) = eig.eigenvectors().col(m - 1 - i);
  }
}

}  // namespace

HdMedModel m_step(const SuffStats& stats, const HdMedModel& prev, MStepEvents* events) {
  const Index k = prev.size();
  const Index m = prev.dim();
  if (stats.size() != k || stats.dim() != m) {
    throw InvalidArgument("m_step: statistic shapes do not match the model");
  }
  const double total_mass = stats.mass();
  if (!(total_mass > 0.0)) throw NumericalError("m_step: zero total mass");

  HdMedModel next;
  next.weights.resize(k);
  next.components.reserve(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    const auto& s = stats.comp[static_cast<std::size_t>(j)];
    if (!(s.s0 >= kCollapseMass)) throw ComponentCollapse(j, s.s0);
    const double inv0 = 1.0 / s.s0;
    const VectorXd n1 = s.s1 * inv0;
    const double n4 = s.s4 * inv0;
    if (!(n4 > 0.0)) throw ComponentCollapse(j, s.s0);

    HdEdComponent c;
    c.mu = n1 / n4;
    MatrixXd scatter = (s.s2 * inv0) - n1 * n1.transpose() / n4;
    scatter = 0.5 * (scatter + scatter.transpose());

    VectorXd evals;
    MatrixXd evecs;
    eigen_desc(scatter, &evals, &evecs);
    const Index d = std::min(prev.components[static_cast<std::size_t>(j)].rank(), m - 1);
    SpikedScale sp = build_spiked(evals, evecs, d, events);
    c.dstar = std::move(sp.dstar);
    c.a = std::move(sp.a);
    c.b = sp.b;

    if (prev.family() == MixingKind::GammaMix) {
      const auto& s5 = s.s5;
      c.mixing = MixingFamily::student(
          solve_degrees_of_freedom(s5[0] * inv0, s5[1] * inv0));
    } else {
      c.mixing = MixingFamily::gaussian();
    }
    next.components.push_back(std::move(c));
    next.weights[j] = s.s0 / total_mass;
  }
  return next;
}

HdMedModel spectral_init(const Eigen::Ref<const MatrixXd>& subsample, const FitConfig& cfg) {
  cfg.validate();
  const Index m = subsample.cols();
  if (m < 2) throw InvalidArgument("spectral init: need signal dimension >= 2");

  const BatchEmResult batch = fit_batch(subsample, cfg.components, cfg.family,
                                        cfg.init_iterations, cfg.seed, cfg.nu_init);
  const Index rank_cap =
      cfg.max_rank > 0 ? std::min<Index>(cfg.max_rank, m - 1) : m - 1;

  HdMedModel model;
  model.weights = batch.mixture.weights;
  for (Index j = 0; j < cfg.components; ++j) {
    VectorXd evals;
    MatrixXd evecs;
    eigen_desc(batch.mixture.covariances[static_cast<std::size_t>(j)], &evals, &evecs);

    Index d = 0;
    if (m >= 3) {
      std::vector<double> curve(evals.data(), evals.data() + m);
      if (const auto knee = kneedle(curve, cfg.kneedle_sensitivity); knee && *knee >= 1) {
        d = *knee;
      }
    }
    if (d == 0) {
      const double total = std::max(evals.sum(), 1e-300);
      double cum = 0.0;
      for (Index i = 0; i < m; ++i) {
        cum += evals[i];
        if (cum >= cfg.explained_fallback * total) {
          d = i + 1;
          break;
        }
      }
    }
    d = std::clamp<Index>(d, 1, rank_cap);

    HdEdComponent c;
    c.mu = batch.mixture.means[static_cast<std::size_t>(j)];
    SpikedScale sp = build_spiked(evals, evecs, d, nullptr);
    c.dstar = std::move(sp.dstar);
    c.a = std::move(sp.a);
    c.b = sp.b;
    c.mixing = cfg.family == MixingKind::GammaMix
                   ? MixingFamily::student(batch.mixture.nu[static_cast<std::size_t>(j)])
                   : MixingFamily::gaussian();
    model.components.push_back(std::move(c));
  }
  model.validate();
  return model;
}

namespace {

// Uniform subsample of the training rows (Algorithm R reservoir).
MatrixXd draw_subsample(const DictionaryStore& data, std::uint64_t first_row, Index target,
                        Index batch_rows, std::uint64_t seed) {
  const std::uint64_t n = data.rows();
  MatrixXd reservoir(target, data.signal_dim());
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uint64_t seen = 0;
  MatrixXd block;
  for (std::uint64_t pos = first_row; pos < n;) {
    const Index count = static_cast<Index>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(batch_rows), n - pos));
    data.read_rows(pos, count, &block, nullptr);
    for (Index i = 0; i < count; ++i) {
      if (seen < static_cast<std::uint64_t>(target)) {
        reservoir.row(static_cast<Index>(seen)) = block.row(i);
      } else {
        std::uniform_int_distribution<std::uint64_t> pick(0, seen);
        const std::uint64_t slot = pick(rng);
        if (slot < static_cast<std::uint64_t>(target)) {
          reservoir.row(static_cast<Index>(slot)) = block.row(i);
        }
      }
      ++seen;
    }
    pos += static_cast<std::uint64_t>(count);
  }
  if (seen < static_cast<std::uint64_t>(target)) {
    return reservoir.topRows(static_cast<Index>(seen));
  }
  return reservoir;
}

// Fixed-point statistics of a single observation sitting exactly on a
// component: used to re-seed a collapsed component at mass delta.
void reseed_component(HdMedModel& model, SuffStats& stats, Index k,
                      const Eigen::Ref<const MatrixXd>& batch) {
  VectorXd row_ld;
  (void)responsibilities_rows(model, batch, &row_ld);
  Index worst = 0;
  row_ld.minCoeff(&worst);
  HdEdComponent& c = model.components[static_cast<std::size_t>(k)];
  c.mu = batch.row(worst).transpose();

  const Index kk = model.size();
  const double delta = 0.5 / static_cast<double>(kk);
  double others = 0.0;
  for (Index j = 0; j < kk; ++j) {
    if (j != k) others += stats.comp[static_cast<std::size_t>(j)].s0;
  }
  const double scale = others > 0.0 ? (1.0 - delta) / others : 0.0;
  for (Index j = 0; j < kk; ++j) {
    auto& s = stats.comp[static_cast<std::size_t>(j)];
    if (j == k) continue;
    s.s0 *= scale;
    s.s1 *= scale;
    s.s2 *= scale;
    s.s3 *= scale;
    s.s4 *= scale;
    s.s5 *= scale;
  }
  auto& s = stats.comp[static_cast<std::size_t>(k)];
  const MatrixXd sigma = c.b * MatrixXd::Identity(c.dim(), c.dim()) +
                         c.dstar * (c.a.array() - c.b).matrix().asDiagonal() *
                             c.dstar.transpose();
  s.s0 = delta;
  s.s1 = delta * c.mu;
  s.s2 = delta * (sigma + c.mu * c.mu.transpose());
  s.s3 = delta * (sigma.trace() + c.mu.squaredNorm());
  s.s4 = delta;
  s.s5[0] = delta;
  s.s5[1] = c.mixing.is_gamma()
                ? delta * (digamma(0.5 * c.mixing.nu()) - std::log(0.5 * c.mixing.nu()))
                : 0.0;
}

std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string FitReport::to_csv() const {
  std::string out = "step,gamma,heldout_loglik,min_mass\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step);
    out += ',';
    out += format_g(r.gamma);
    out += ',';
    out += format_g(r.heldout_loglik);
    out += ',';
    out += format_g(r.min_mass);
    out += '\n';
  }
  return out;
}

FitResult fit_online(const DictionaryStore& data, const FitConfig& cfg) {
  cfg.validate();
  const std::uint64_t n = data.rows();
  std::uint64_t heldout = 0;
  if (n > 20 && cfg.heldout_fraction > 0.0) {
    heldout = std::min<std::uint64_t>(
        static_cast<std::uint64_t>(cfg.heldout_cap),
        static_cast<std::uint64_t>(
            std::ceil(cfg.heldout_fraction * static_cast<double>(n))));
  }
  const std::uint64_t train = n - heldout;
  if (train < static_cast<std::uint64_t>(2 * cfg.components)) {
    throw InvalidArgument("fit: not enough training rows for the requested components");
  }
  const Index target = static_cast<Index>(
      std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg.init_rows), train));
  const MatrixXd subsample = draw_subsample(data, heldout, target, cfg.batch_size, cfg.seed);
  const HdMedModel init = spectral_init(subsample, cfg);
  return fit_online(data, cfg, init);
}

FitResult fit_online(const DictionaryStore& data, const FitConfig& cfg,
                     const HdMedModel& init) {
  cfg.validate();
  init.validate();
  if (init.size() != cfg.components) {
    throw InvalidArgument("fit: init model component count does not match the config");
  }
  if (init.dim() != data.signal_dim()) {
    throw InvalidArgument("fit: store dimension does not match the model");
  }
  const std::uint64_t n = data.rows();
  std::uint64_t heldout = 0;
  if (n > 20 && cfg.heldout_fraction > 0.0) {
    heldout = std::min<std::uint64_t>(
        static_cast<std::uint64_t>(cfg.heldout_cap),
        static_cast<std::uint64_t>(
            std::ceil(cfg.heldout_fraction * static_cast<double>(n))));
  }
  if (n <= heldout) throw InvalidArgument("fit: no training rows after the held-out prefix");

  MatrixXd heldout_rows;
  if (heldout > 0) {
    data.read_rows(0, static_cast<Index>(heldout), &heldout_rows, nullptr);
  }

  HdMedModel model = init;
  FitResult result;
  result.report.heldout_rows = heldout;
  SuffStats stats;
  std::int64_t step = 0;
  MStepEvents events;

  auto heldout_avg = [&]() {
    if (heldout == 0) return std::numeric_limits<double>::quiet_NaN();
    return log_likelihood_rows(model, heldout_rows) / static_cast<double>(heldout);
  };
  auto min_mass = [&]() {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& c : stats.comp) lo = std::min(lo, c.s0);
    return lo;
  };

  MatrixXd block;
  for (int pass = 0; pass < cfg.passes; ++pass) {
    for (std::uint64_t pos = heldout; pos < n;) {
      const Index count = static_cast<Index>(
          std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg.batch_size), n - pos));
      data.read_rows(pos, count, &block, nullptr);
      pos += static_cast<std::uint64_t>(count);
      result.report.trained_rows += static_cast<std::uint64_t>(count);

      double gamma = 0.0;
      const SuffStats fresh = expected_stats_rows(model, block, cfg.threads);
      if (step == 0) {
        stats = fresh;
      } else {
        gamma = cfg.schedule(step);
        stats = sa_update(stats, fresh, gamma);
        for (Index attempt = 0; attempt <= cfg.components; ++attempt) {
          try {
            model = m_step(stats, model, &events);
            break;
          } catch (const ComponentCollapse& collapse) {
            if (!cfg.recover_on_collapse || attempt == cfg.components) throw;
            reseed_component(model, stats, collapse.component, block);
            result.report.collapse_recoveries += 1;
          }
        }
      }
      if (step % cfg.report_every == 0 || pos >= n) {
        result.report.rows.push_back({step, gamma, heldout_avg(), min_mass()});
      }
      ++step;
    }
  }
  result.report.floor_events = events.floors;
  result.report.shrink_events = events.shrinks;
  result.model = std::move(model);
  return result;
}

}  // namespace hdmed

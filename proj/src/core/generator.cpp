#include "core/generator.hpp"

#include <cmath>

namespace hdmed {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_eval_args(double u, int m_dim) {
  if (!(u >= 0.0) || !std::isfinite(u)) {
    throw InvalidArgument("generator: squared distance must be finite and >= 0");
  }
  if (m_dim < 1) throw InvalidArgument("generator: dimension must be >= 1");
}

}  // namespace

MixingFamily MixingFamily::gamma_mix(double alpha, double beta) {
  MixingFamily m{MixingKind::GammaMix, alpha, beta};
  m.validate();
  return m;
}

MixingFamily MixingFamily::student(double nu) { return gamma_mix(0.5 * nu, 0.5 * nu); }

void MixingFamily::validate() const {
  if (kind == MixingKind::Gaussian) return;
  if (!(alpha > 0.0) || !std::isfinite(alpha) || !(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidArgument("mixing family: gamma shape and rate must be finite and > 0");
  }
}

GeneratorEval generator_eval(const MixingFamily& mix, double u, int m_dim) {
  check_eval_args(u, m_dim);
  const double half_m = 0.5 * m_dim;
  const double c = -half_m * kLog2Pi;
  if (mix.kind == MixingKind::Gaussian) {
    return {c - 0.5 * u, -0.5};
  }
  const double a = mix.alpha;
  const double b = mix.beta;
  const double log_g = c + a * std::log(b) - std::lgamma(a) + std::lgamma(a + half_m) -
                       (a + half_m) * std::log(b + 0.5 * u);
  const double dlog_g = -(a + half_m) / (2.0 * b + u);
  return {log_g, dlog_g};
}

WeightPosterior weight_posterior(const MixingFamily& mix, double u, int m_dim) {
  check_eval_args(u, m_dim);
  if (mix.kind == MixingKind::Gaussian) return {1.0, 0.0};
  const double shape = mix.alpha + 0.5 * m_dim;
  const double rate = mix.beta + 0.5 * u;
  return {shape / rate, digamma(shape) - std::log(rate)};
}

}  // namespace hdmed

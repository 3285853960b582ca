#include "sdfssl/meta_ema.hpp"

#include <algorithm>
#include <cmath>

namespace sdfssl {

void EmaConfig::validate() const {
  if (!(m_min > 0.0 && m_min <= m_max && m_max < 1.0))
    throw ConfigError("ema momentum bounds need 0 < m_min <= m_max < 1");
  if (!(m0 >= m_min && m0 <= m_max)) throw ConfigError("ema m0 must lie in [m_min, m_max]");
  if (eta < 0.0) throw ConfigError("ema eta must be >= 0");
  if (total_steps < 1) throw ConfigError("ema total_steps must be >= 1");
}

MetaControllerState init_controller(int hidden, std::uint64_t seed) {
  if (hidden < 1) throw ConfigError("controller hidden size must be >= 1");
  MetaControllerState ctrl;
  ctrl.hidden = hidden;
  ctrl.seed = seed;
  Rng rng(derive_seed(seed, {0x6d657461ULL}));  // "meta"
  const double bound1 = std::sqrt(6.0 / (3 + hidden));
  ctrl.w1.resize(static_cast<std::size_t>(hidden) * 3);
  for (double& v : ctrl.w1) v = rng.uniform(-bound1, bound1);
  ctrl.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  const double bound2 = std::sqrt(6.0 / (hidden + 1));
  ctrl.w2.resize(static_cast<std::size_t>(hidden));
  for (double& v : ctrl.w2) v = rng.uniform(-bound2, bound2);
  ctrl.b2 = 0.0;
  return ctrl;
}

double base_momentum(int t, int total, double m0) {
  if (total < 1) throw PreconditionError("base_momentum needs T >= 1");
  if (t < 0 || t > total) throw PreconditionError("base_momentum needs 0 <= t <= T");
  const double phase = (std::cos(M_PI * t / total) + 1.0) / 2.0;
  return 1.0 - (1.0 - m0) * phase;
}

double controller_gamma(const EmaInputs& inputs, const MetaControllerState& ctrl) {
  if (!(std::isfinite(inputs.delta_loss) && std::isfinite(inputs.teacher_loss)))
    throw PreconditionError("controller inputs must be finite");
  if (inputs.progress < 0.0 || inputs.progress > 1.0)
    throw PreconditionError("controller progress must be in [0, 1]");
  const double u[3] = {inputs.delta_loss, inputs.teacher_loss, inputs.progress};
  double pre = ctrl.b2;
  for (int j = 0; j < ctrl.hidden; ++j) {
    double z = ctrl.b1[static_cast<std::size_t>(j)];
    for (int i = 0; i < 3; ++i) z += ctrl.w1[static_cast<std::size_t>(j) * 3 + i] * u[i];
    if (z > 0.0) pre += ctrl.w2[static_cast<std::size_t>(j)] * z;
  }
  const double sig = 1.0 / (1.0 + std::exp(-pre));
  return sig * 0.01 + 0.995;
}

double effective_momentum(double gamma, double m_base, const EmaConfig& cfg) {
  cfg.validate();
  return std::clamp(gamma * m_base, cfg.m_min, cfg.m_max);
}

ParamVector ema_update_fixed(const ParamVector& teacher, const ParamVector& student, double m) {
  if (teacher.total_len() != student.total_len())
    throw ShapeError("ema update needs aligned teacher/student vectors");
  if (!(m >= 0.0 && m <= 1.0)) throw PreconditionError("ema momentum must be in [0, 1]");
  ParamVector next = teacher;
  for (std::size_t i = 0; i < next.values.size(); ++i)
    next.values[i] = m * teacher.values[i] + (1.0 - m) * student.values[i];
  return next;
}

ParamVector ema_update_regularized(const ParamVector& teacher, const ParamVector& student,
                                   double m, const ImportanceMap& omega, double eta) {
  if (teacher.total_len() != student.total_len())
    throw ShapeError("ema update needs aligned teacher/student vectors");
  if (omega.omega.size() != teacher.total_len())
    throw ShapeError("importance map is not aligned with the parameter vector");
  if (!(m >= 0.0 && m <= 1.0)) throw PreconditionError("ema momentum must be in [0, 1]");
  if (eta < 0.0) throw PreconditionError("eta must be >= 0");
  ParamVector next = teacher;
  for (std::size_t i = 0; i < next.values.size(); ++i) {
    const double delta = student.values[i] - teacher.values[i];
    next.values[i] = teacher.values[i] + (1.0 - m) / (1.0 + eta * omega.omega[i]) * delta;
  }
  return next;
}

double maybe_reset(double sup_loss, double teacher_loss, const EmaConfig& cfg, double m) {
  if (!(std::isfinite(sup_loss) && std::isfinite(teacher_loss)))
    throw PreconditionError("maybe_reset needs finite losses");
  const double gap = sup_loss - teacher_loss;
  const bool fire = cfg.reset_greater ? gap > cfg.delta : gap < cfg.delta;
  return fire ? cfg.reset_factor * m : m;
}

void adapt_controller(MetaControllerState& ctrl,
                      const std::function<double(const MetaControllerState&)>& objective,
                      double fd_step, double lr) {
  auto descend = [&](double& param) {
    const double keep = param;
    param = keep + fd_step;
    const double up = objective(ctrl);
    param = keep - fd_step;
    const double down = objective(ctrl);
    param = keep - lr * (up - down) / (2.0 * fd_step);
  };
  for (double& v : ctrl.w1) descend(v);
  for (double& v : ctrl.b1) descend(v);
  for (double& v : ctrl.w2) descend(v);
  descend(ctrl.b2);
}

}  // namespace sdfssl

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sdfssl/importance.hpp"
#include "sdfssl/nnet.hpp"

namespace sdfssl {

// Meta-adaptive EMA teacher update: cosine-annealed base momentum, MLP
// meta-controller scaling, clamping, importance-regularized per-parameter
// update, and the drift-reset rule.

struct EmaConfig {
  double m0 = 0.996;
  double m_min = 0.99;
  double m_max = 0.9999;
  double eta = 1.0;
  double delta = 0.01;       // reset threshold; -inf disables the reset
  double reset_factor = 0.6; // fixed by the reset rule
  int total_steps = 1;
  bool use_importance = true;
  bool use_dynamic = true;
  bool reset_greater = false;  // flips the printed comparison direction

  void validate() const;
};

struct MetaControllerState {
  int hidden = 16;
  std::uint64_t seed = 0;
  std::vector<double> w1;  // hidden x 3, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;
};

MetaControllerState init_controller(int hidden, std::uint64_t seed);

struct EmaInputs {
  double delta_loss = 0.0;   // teacher loss - student loss
  double teacher_loss = 0.0;
  double progress = 0.0;     // t / T in [0, 1]
};

// 1 - (1 - m0) * (cos(pi t / T) + 1) / 2
double base_momentum(int t, int total, double m0);

// sigmoid(W2 . relu(W1 u + b1) + b2) * 0.01 + 0.995, so gamma in (0.995, 1.005)
double controller_gamma(const EmaInputs& inputs, const MetaControllerState& ctrl);

// clip(gamma * m_base, m_min, m_max)
double effective_momentum(double gamma, double m_base, const EmaConfig& cfg);

// theta_T' = m * theta_T + (1 - m) * theta_S
ParamVector ema_update_fixed(const ParamVector& teacher, const ParamVector& student, double m);

// theta_T,i' = theta_T,i + (1 - m) / (1 + eta * omega_i) * (theta_S,i - theta_T,i)
ParamVector ema_update_regularized(const ParamVector& teacher, const ParamVector& student,
                                   double m, const ImportanceMap& omega, double eta);

// Returns reset_factor * m when the drift condition fires, else m. The printed
// condition is sup_loss - teacher_loss < delta; reset_greater flips it.
double maybe_reset(double sup_loss, double teacher_loss, const EmaConfig& cfg, double m);

// Optional extension: one coordinate-wise finite-difference descent step of
// the objective over the controller weights.
void adapt_controller(MetaControllerState& ctrl,
                      const std::function<double(const MetaControllerState&)>& objective,
                      double fd_step, double lr);

}  // namespace sdfssl

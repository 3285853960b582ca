#pragma once

// Independent reference computations used to check the library. Everything
// here is deliberately written from scratch against the definitions, not by
// calling the implementation under test.

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdfssl/metrics.hpp"
#include "sdfssl/nnet.hpp"

namespace oracle {

// Straightforward re-implementation of the MLP forward pass: nested vectors,
// no shared code with sdfssl::forward.
inline std::vector<double> mlp_forward(const sdfssl::NetworkSpec& spec,
                                       const std::vector<double>& flat,
                                       const std::vector<double>& input) {
  std::vector<double> cur = input;
  std::size_t off = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    std::vector<double> next(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double z = flat[off + static_cast<std::size_t>(in) * out + o];  // bias
      for (int i = 0; i < in; ++i) z += flat[off + static_cast<std::size_t>(o) * in + i] * cur[i];
      switch (spec.activations[l]) {
        case sdfssl::Activation::identity: break;
        case sdfssl::Activation::relu: z = z > 0 ? z : 0; break;
        case sdfssl::Activation::tanh: z = std::tanh(z); break;
        case sdfssl::Activation::sigmoid: z = 1.0 / (1.0 + std::exp(-z)); break;
      }
      next[o] = z;
    }
    off += static_cast<std::size_t>(in) * out + out;
    cur = std::move(next);
  }
  return cur;
}

// Central finite differences of an arbitrary scalar loss over the parameters.
template <typename LossFn>
std::vector<double> finite_difference_grad(const sdfssl::ParamVector& params, LossFn loss,
                                           double h = 1e-5) {
  std::vector<double> grad(params.total_len());
  sdfssl::ParamVector p = params;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double keep = p.values[i];
    p.values[i] = keep + h;
    const double up = loss(p);
    p.values[i] = keep - h;
    const double down = loss(p);
    p.values[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline bool grad_close(const std::vector<double>& a, const std::vector<double>& b,
                       double rel_tol = 1e-4, double abs_floor = 1e-8) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), abs_floor / rel_tol});
    if (std::abs(a[i] - b[i]) > rel_tol * scale) return false;
  }
  return true;
}

// O(n^2) nearest-neighbor chamfer, written directly from the definition.
inline double brute_force_chamfer_x100(const std::vector<sdfssl::Vec2>& a,
                                       const std::vector<sdfssl::Vec2>& b) {
  auto mean_min = [](const std::vector<sdfssl::Vec2>& from, const std::vector<sdfssl::Vec2>& to) {
    double acc = 0.0;
    for (const sdfssl::Vec2& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const sdfssl::Vec2& q : to) {
        const double dx = p.x - q.x, dy = p.y - q.y;
        best = std::min(best, std::sqrt(dx * dx + dy * dy));
      }
      acc += best;
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (mean_min(a, b) + mean_min(b, a)) * 100.0;
}

}  // namespace oracle

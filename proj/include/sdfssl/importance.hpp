#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdfssl/data.hpp"
#include "sdfssl/nnet.hpp"

namespace sdfssl {

// Gradient-based per-parameter importance: mean absolute gradient of the
// squared-norm probe loss over batches of weakly augmented unlabeled inputs.

struct ImportanceMap {
  std::vector<double> omega;  // aligned with the teacher ParamVector
  int n_batches = 0;
  bool normalized = false;
};

// Probe loss: sum of squared SDF outputs.
double importance_loss(std::span<const double> sdf_out);

// Generic core: the provider yields one input batch per call (already
// augmented/encoded); gradients of the probe loss are accumulated as |g|/N.
using BatchProvider = std::function<Batch(int batch_index, Rng& rng)>;

ImportanceMap estimate_importance(const ParamVector& teacher, const NetworkSpec& spec,
                                  const BatchProvider& provider, int n_batches, Rng& rng);

// Dataset convenience: draws batches of unlabeled samples with replacement,
// weak-augments each image, and encodes all its query points.
ImportanceMap estimate_importance(const ParamVector& teacher, const NetworkSpec& spec,
                                  const Dataset& ds, std::span<const std::size_t> unlabeled,
                                  int n_batches, int batch_size, const FeatureConfig& feat,
                                  const WeakAugConfig& weak, Rng& rng);

// Scales omega to mean 1 (an all-zero map is returned unchanged).
ImportanceMap normalize_importance(const ImportanceMap& map);

void dump_importance_csv(const std::string& path, const ImportanceMap& map,
                         const ParamVector& params);

}  // namespace sdfssl

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdfssl/data.hpp"

namespace sdfssl {

// SDF-aware pseudo-label reliability: augmentation consistency plus prediction
// variance, clamped into a [0,1] weight, and the blended loss assembly.

struct WeightParams {
  double alpha = 4.0;
  double beta = 4.0;
  double lambda = 0.2;
  std::optional<double> w_max;  // optional hard cap, off by default
};

struct PseudoAssessment {
  double cons_loss = 0.0;
  double variance = 0.0;
  double weight = 0.0;
};

enum class ConsistencyKind { l1, l2 };

ConsistencyKind consistency_from_string(const std::string& s);

// Mean discrepancy between strong- and weak-augmentation predictions.
double consistency_loss(std::span<const double> f_s, std::span<const double> f_w,
                        ConsistencyKind kind = ConsistencyKind::l1);

// Unbiased sample variance of the flattened prediction vector.
double sdf_variance(std::span<const double> f_w);

// clip(1 - alpha*cons - beta*var, 0, 1), optionally capped at w_max.
double pseudo_weight(double cons, double var, const WeightParams& params);

struct LossTerm {
  std::string key;
  double value = 0.0;
};

// sum_k [(1 - lambda*w) * sup_k + lambda*w * unsup_k]; key sets must match.
double blended_loss(const std::vector<LossTerm>& sup_terms,
                    const std::vector<LossTerm>& unsup_terms, double w, double lambda);

// A predictor maps (image, query points) -> SDF values; the trainer wraps the
// teacher network, tests may wrap the analytic oracle.
using Predictor = std::function<std::vector<double>(const Image&, std::span<const Vec2>)>;

struct AugmentorPair {
  std::function<Image(const Image&, Rng&)> weak;
  std::function<Image(const Image&, Rng&)> strong;
};

AugmentorPair default_augmentors(const WeakAugConfig& weak = {}, const StrongAugConfig& strong = {});
AugmentorPair identity_augmentors();

struct SampleAssessment {
  PseudoAssessment assessment;
  Image weak_image;
  Image strong_image;
  std::vector<double> pseudo_labels;  // f_w, the student's training target
};

// Evaluates the teacher under weak and strong augmentations of an unlabeled
// sample and scores the pseudo-label. f_w is retained as the target.
SampleAssessment assess_sample(const Predictor& teacher, const Sample& sample, Rng& rng,
                               const WeightParams& params, const AugmentorPair& aug,
                               ConsistencyKind kind = ConsistencyKind::l1);

}  // namespace sdfssl

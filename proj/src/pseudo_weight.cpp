#include "sdfssl/pseudo_weight.hpp"

#include <algorithm>
#include <cmath>

namespace sdfssl {

ConsistencyKind consistency_from_string(const std::string& s) {
  if (s == "l1") return ConsistencyKind::l1;
  if (s == "l2") return ConsistencyKind::l2;
  throw ConfigError("unknown consistency kind: " + s);
}

double consistency_loss(std::span<const double> f_s, std::span<const double> f_w,
                        ConsistencyKind kind) {
  if (f_s.size() != f_w.size()) throw ShapeError("consistency_loss needs equal-length vectors");
  if (f_s.empty()) throw PreconditionError("consistency_loss needs nonempty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < f_s.size(); ++i) {
    const double d = f_s[i] - f_w[i];
    acc += kind == ConsistencyKind::l1 ? std::abs(d) : d * d;
  }
  return acc / static_cast<double>(f_s.size());
}

double sdf_variance(std::span<const double> f_w) {
  if (f_w.size() < 2) throw PreconditionError("sdf_variance needs at least 2 values");
  double mean = 0.0;
  for (double v : f_w) mean += v;
  mean /= static_cast<double>(f_w.size());
  double acc = 0.0;
  for (double v : f_w) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(f_w.size() - 1);
}

double pseudo_weight(double cons, double var, const WeightParams& params) {
  if (cons < 0.0 || var < 0.0)
    throw PreconditionError("pseudo_weight needs nonnegative cons and var");
  double w = std::clamp(1.0 - params.alpha * cons - params.beta * var, 0.0, 1.0);
  if (params.w_max) w = std::min(w, *params.w_max);
  return w;
}

double blended_loss(const std::vector<LossTerm>& sup_terms,
                    const std::vector<LossTerm>& unsup_terms, double w, double lambda) {
  if (w < 0.0 || w > 1.0) throw PreconditionError("blended_loss needs w in [0,1]");
  if (sup_terms.size() != unsup_terms.size())
    throw ConfigError("blended_loss term key sets differ in size");
  auto sorted_keys = [](const std::vector<LossTerm>& terms) {
    std::vector<std::string> keys;
    for (const LossTerm& t : terms) keys.push_back(t.key);
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  if (sorted_keys(sup_terms) != sorted_keys(unsup_terms))
    throw ConfigError("blended_loss term key sets do not match");

  double total = 0.0;
  for (const LossTerm& sup : sup_terms) {
    const auto it = std::find_if(unsup_terms.begin(), unsup_terms.end(),
                                 [&](const LossTerm& t) { return t.key == sup.key; });
    total += (1.0 - lambda * w) * sup.value + lambda * w * it->value;
  }
  return total;
}

AugmentorPair default_augmentors(const WeakAugConfig& weak, const StrongAugConfig& strong) {
  return {
      [weak](const Image& img, Rng& rng) { return weak_augment(img, rng, weak); },
      [strong](const Image& img, Rng& rng) { return strong_augment(img, rng, strong); },
  };
}

AugmentorPair identity_augmentors() {
  auto id = [](const Image& img, Rng&) { return img; };
  return {id, id};
}

SampleAssessment assess_sample(const Predictor& teacher, const Sample& sample, Rng& rng,
                               const WeightParams& params, const AugmentorPair& aug,
                               ConsistencyKind kind) {
  if (sample.labeled) throw PreconditionError("assess_sample expects an unlabeled sample");
  SampleAssessment out;
  out.weak_image = aug.weak(sample.image, rng);
  out.strong_image = aug.strong(sample.image, rng);
  out.pseudo_labels = teacher(out.weak_image, sample.query_points);
  const std::vector<double> f_s = teacher(out.strong_image, sample.query_points);
  out.assessment.cons_loss = consistency_loss(f_s, out.pseudo_labels, kind);
  out.assessment.variance = sdf_variance(out.pseudo_labels);
  out.assessment.weight =
      pseudo_weight(out.assessment.cons_loss, out.assessment.variance, params);
  return out;
}

}  // namespace sdfssl

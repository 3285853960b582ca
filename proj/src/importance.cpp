#include "sdfssl/importance.hpp"

#include <cmath>

namespace sdfssl {

double importance_loss(std::span<const double> sdf_out) {
  if (sdf_out.empty()) throw PreconditionError("importance_loss needs a nonempty vector");
  double acc = 0.0;
  for (double v : sdf_out) acc += v * v;
  return acc;
}

ImportanceMap estimate_importance(const ParamVector& teacher, const NetworkSpec& spec,
                                  const BatchProvider& provider, int n_batches, Rng& rng) {
  if (n_batches < 1) throw ConfigError("estimate_importance needs n_batches >= 1");
  ImportanceMap map;
  map.omega.assign(teacher.total_len(), 0.0);
  map.n_batches = n_batches;
  const LossSpec probe{LossKind::squared_norm};
  for (int b = 0; b < n_batches; ++b) {
    const Batch batch = provider(b, rng);
    LossGrad lg;
    try {
      lg = forward_backward(teacher, spec, batch, probe);
    } catch (const NumericError& e) {
      throw NumericError("importance estimation failed: " + std::string(e.what()),
                         static_cast<std::size_t>(b));
    }
    for (std::size_t i = 0; i < map.omega.size(); ++i)
      map.omega[i] += std::abs(lg.grad.values[i]);
  }
  const double inv = 1.0 / static_cast<double>(n_batches);
  for (double& w : map.omega) w *= inv;
  return map;
}

ImportanceMap estimate_importance(const ParamVector& teacher, const NetworkSpec& spec,
                                  const Dataset& ds, std::span<const std::size_t> unlabeled,
                                  int n_batches, int batch_size, const FeatureConfig& feat,
                                  const WeakAugConfig& weak, Rng& rng) {
  if (unlabeled.empty()) throw PreconditionError("estimate_importance needs unlabeled samples");
  if (batch_size < 1) throw ConfigError("estimate_importance needs batch_size >= 1");
  BatchProvider provider = [&](int, Rng& r) {
    Batch batch;
    batch.input_dim = static_cast<std::size_t>(feature_dim(feat));
    std::vector<double> rows;
    for (int k = 0; k < batch_size; ++k) {
      const Sample& s = ds.samples[unlabeled[r.index(unlabeled.size())]];
      const Image aug = weak_augment(s.image, r, weak);
      encode_query_rows(aug, s.query_points, feat, rows);
      batch.inputs.insert(batch.inputs.end(), rows.begin(), rows.end());
    }
    return batch;
  };
  return estimate_importance(teacher, spec, provider, n_batches, rng);
}

ImportanceMap normalize_importance(const ImportanceMap& map) {
  ImportanceMap out = map;
  out.normalized = true;
  double mean = 0.0;
  for (double w : map.omega) mean += w;
  if (map.omega.empty()) return out;
  mean /= static_cast<double>(map.omega.size());
  if (mean == 0.0) return out;  // all-zero map stays as-is
  for (double& w : out.omega) w /= mean;
  return out;
}

void dump_importance_csv(const std::string& path, const ImportanceMap& map,
                         const ParamVector& params) {
  CsvWriter csv(path);
  csv.raw_line("index,name,omega");
  for (std::size_t i = 0; i < map.omega.size(); ++i)
    csv.row({std::to_string(i), params.scalar_name(i), fmt_g(map.omega[i])});
}

}  // namespace sdfssl
